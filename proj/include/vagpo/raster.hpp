#pragma once

#include <string>
#include <vector>

#include "vagpo/problems.hpp"

namespace vagpo {

inline constexpr int kRasterSize = 224;

// 224x224x3 image, channel-last, float pixels in [0, 1]. Row index follows
// y, column index follows x.
struct RasterImage {
  int height = kRasterSize;
  int width = kRasterSize;
  std::vector<float> pixels;  // height * width * 3
  std::string meta;           // source instance id

  RasterImage() : pixels(static_cast<std::size_t>(kRasterSize) * kRasterSize * 3, 0.0f) {}

  float& at(int row, int col, int channel) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
  }
  float at(int row, int col, int channel) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
  }
};

// floor(coord * 224) clamped to [0, 223].
int pixel_index(double coord, int size = kRasterSize);

RasterImage rasterize_tsp(const Instance& inst);
RasterImage rasterize_cvrp(const Instance& inst);
RasterImage rasterize(const Instance& inst);

// Probability that one pixel holds more than one of n nodes spread over m
// pixels (Poisson tail approximation).
double pixel_collision_prob(long long n, long long m);

// Probability that at most one pixel holds more than one node; evaluated in
// log space so (1-p)^m does not underflow.
double at_most_one_collision_prob(long long n, long long m);

// Portable FloatMap (PF, little-endian) debug export; float pixels
// round-trip bit-exactly.
void write_pfm(const RasterImage& image, const std::string& path);
RasterImage read_pfm(const std::string& path);

}  // namespace vagpo
