#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace vagpo {

using Mat = Eigen::MatrixXd;

// Ordered collection of named parameter matrices with gradients and
// optimizer slots. Order is creation order and defines the layout of the
// flattened views and the checkpoint file.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
  };

  Mat& create(const std::string& name, int rows, int cols,
              const std::function<void(Mat&)>& init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads();
  std::size_t total_size() const;

  // Flat views in entry order (column-major within each matrix); used by the
  // finite-difference harness.
  std::vector<double> flatten_values() const;
  void set_values(const std::vector<double>& flat);
  std::vector<double> flatten_grads() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamOptimizer {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  long long t = 0;

  void step(ParamStore& store);
};

// Checkpoint container: named parameter blobs, a free-form JSON config, the
// optimizer state and the step counter. Raw little-endian doubles; values
// round-trip bit-exactly.
struct Checkpoint {
  nlohmann::json config;
  long long step = 0;
  bool has_optimizer_state = false;
  AdamOptimizer adam;
};

void save_checkpoint(const std::string& path, const ParamStore& store, const Checkpoint& meta);
// Restores parameter values (and optimizer slots when present) into an
// existing store with matching names/shapes, or populates an empty one.
Checkpoint load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace vagpo
