#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "vagpo/common.hpp"
#include "vagpo/raster.hpp"

namespace vagpo {

// Channel-major (CHW) activation tensor produced by the backbone.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // channels * height * width

  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Spatial mean per channel.
Eigen::VectorXd global_feature(const FeatureMap& fm);

// Bilinear sample at the fractional grid position (x * (W-1), y * (H-1)) for
// a node at normalized coordinates (x, y); coordinates are clamped to the
// grid. At integer grid positions this returns the cell value exactly.
Eigen::VectorXd local_feature(const FeatureMap& fm, Vec2 coord);

// 18-layer residual CNN over the 224x224x3 raster, stem 7x7/2 + 3x3/2
// max-pool followed by four stages of two basic blocks each
// (64/128/256/512 channels, strides 1/2/2/2), yielding a 512x7x7 map. The
// batch-norm layers are folded into per-channel scale/shift, so a weight
// file produced from a trained network must carry pre-folded affines.
// Weights are fixed at construction and never trained.
class Backbone {
 public:
  // Deterministic He-initialized weights (scale=1, shift=0 affines).
  explicit Backbone(std::uint64_t seed);
  // Loads weights saved by save(); shapes must match the architecture.
  static Backbone from_file(const std::string& path);

  void save(const std::string& path) const;
  FeatureMap forward(const RasterImage& image) const;
  // FNV-1a over all weight bytes; lets callers assert the frozen contract.
  std::uint64_t weights_digest() const;
  int out_channels() const { return 512; }

 private:
  struct ConvBn {
    std::string name;
    int in_c = 0, out_c = 0, k = 0, stride = 0, pad = 0;
    Eigen::MatrixXf weight;   // out_c x (in_c * k * k)
    Eigen::VectorXf scale;    // folded batch-norm, per out channel
    Eigen::VectorXf shift;
  };

  Backbone() = default;
  void build_architecture();
  const ConvBn& layer(const std::string& name) const;

  std::vector<ConvBn> layers_;
};

}  // namespace vagpo
