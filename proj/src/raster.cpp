#include "vagpo/raster.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace vagpo {

int pixel_index(double coord, int size) {
  int idx = static_cast<int>(std::floor(coord * size));
  if (idx < 0) idx = 0;
  if (idx >= size) idx = size - 1;
  return idx;
}

RasterImage rasterize_tsp(const Instance& inst) {
  inst.check();
  if (inst.is_cvrp()) throw std::invalid_argument("rasterize_tsp: expected a TSP instance");
  RasterImage image;
  image.meta = inst.id();
  for (const Vec2& p : inst.coords) {
    const int row = pixel_index(p.y);
    const int col = pixel_index(p.x);
    for (int c = 0; c < 3; ++c) image.at(row, col, c) = 1.0f;
  }
  return image;
}

RasterImage rasterize_cvrp(const Instance& inst) {
  inst.check();
  if (!inst.is_cvrp()) throw std::invalid_argument("rasterize_cvrp: expected a CVRP instance");
  RasterImage image;
  image.meta = inst.id();
  // Customers first (customer/customer collisions keep the larger demand),
  // depot last so it wins its pixel.
  for (int j = 0; j < inst.n(); ++j) {
    if (j == inst.depot) continue;
    const int row = pixel_index(inst.coords[j].y);
    const int col = pixel_index(inst.coords[j].x);
    const float demand = static_cast<float>(inst.normalized_demand(j));
    if (image.at(row, col, 0) == 1.0f && demand <= image.at(row, col, 2)) continue;
    image.at(row, col, 0) = 1.0f;
    image.at(row, col, 1) = 0.0f;
    image.at(row, col, 2) = demand;
  }
  const int depot_row = pixel_index(inst.coords[inst.depot].y);
  const int depot_col = pixel_index(inst.coords[inst.depot].x);
  image.at(depot_row, depot_col, 0) = 1.0f;
  image.at(depot_row, depot_col, 1) = 1.0f;
  image.at(depot_row, depot_col, 2) = 0.0f;
  return image;
}

RasterImage rasterize(const Instance& inst) {
  return inst.is_cvrp() ? rasterize_cvrp(inst) : rasterize_tsp(inst);
}

double pixel_collision_prob(long long n, long long m) {
  if (n < 0 || m < 1) throw std::invalid_argument("pixel_collision_prob: need n >= 0, m >= 1");
  const double rate = static_cast<double>(n) / static_cast<double>(m);
  const double p = -std::expm1(-rate) - rate * std::exp(-rate);
  return p < 0.0 ? 0.0 : p;
}

double at_most_one_collision_prob(long long n, long long m) {
  const double p = pixel_collision_prob(n, m);
  if (p <= 0.0) return 1.0;
  const double md = static_cast<double>(m);
  const double log_q = std::log1p(-p);  // log(1 - p)
  return std::exp(md * log_q) + std::exp(std::log(md) + std::log(p) + (md - 1.0) * log_q);
}

void write_pfm(const RasterImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "PF\n" << image.width << " " << image.height << "\n-1.0\n";
  // PFM stores rows bottom to top.
  for (int row = image.height - 1; row >= 0; --row) {
    const float* line = &image.pixels[static_cast<std::size_t>(row) * image.width * 3];
    out.write(reinterpret_cast<const char*>(line),
              static_cast<std::streamsize>(sizeof(float)) * image.width * 3);
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

RasterImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (magic != "PF" || width <= 0 || height <= 0 || scale >= 0.0) {
    throw std::runtime_error(path + " is not a little-endian color PFM file");
  }
  in.get();  // single whitespace after the header
  RasterImage image;
  image.width = width;
  image.height = height;
  image.pixels.assign(static_cast<std::size_t>(width) * height * 3, 0.0f);
  for (int row = height - 1; row >= 0; --row) {
    float* line = &image.pixels[static_cast<std::size_t>(row) * width * 3];
    in.read(reinterpret_cast<char*>(line),
            static_cast<std::streamsize>(sizeof(float)) * width * 3);
  }
  if (!in) throw std::runtime_error("truncated PFM file " + path);
  return image;
}

}  // namespace vagpo
