#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "vagpo/agpo.hpp"
#include "vagpo/encoder.hpp"

namespace vagpo {

// Full declarative description of a tool run. Serialization is lossless:
// parse -> emit -> parse is a fixed point, so experiment configs can be
// stored and replayed. Command-line flags override config-file values, which
// override the built-in defaults.
struct RunConfig {
  std::string problem = "tsp";
  int n = 20;
  int capacity = 0;  // CVRP vehicle capacity; 0 = size-dependent default
  std::string preset = "small";
  ModelConfig model = ModelConfig::preset("small");
  AgpoConfig agpo;
  std::string optimizer = "agpo";  // "agpo" | "reinforce"
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string device = "cpu";

  int count = 100;     // generate: instances to emit
  bool augment = true;  // eval/solve: x8 test-time augmentation
  std::string policy = "checkpoint";  // eval: checkpoint|oracle|nearest|nn2opt

  int pool_size = 512;
  int val_instances = 16;
  int val_n = 0;  // validation instance size (0 = same as n)
  int eval_interval = 10;
  double max_wall_time_s = 0.0;
  double target_val_gap = -1.0;
  long long max_grad_steps = 0;

  std::string instances_path;
  std::string checkpoint_path;
  std::string metrics_path;
  std::string out_path;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  void validate() const;

  ProblemType problem_type() const { return problem_type_from_string(problem); }
  TrainOptions train_options() const;
};

}  // namespace vagpo
