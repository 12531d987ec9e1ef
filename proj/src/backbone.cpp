#include "vagpo/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace vagpo {

namespace {

constexpr char kMagic[4] = {'V', 'G', 'B', 'B'};
constexpr std::uint32_t kVersion = 1;

FeatureMap image_to_chw(const RasterImage& image) {
  FeatureMap fm;
  fm.channels = 3;
  fm.height = image.height;
  fm.width = image.width;
  fm.data.resize(static_cast<std::size_t>(3) * image.height * image.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) fm.at(c, y, x) = image.at(y, x, c);
  return fm;
}

FeatureMap max_pool_3x3_s2(const FeatureMap& in) {
  FeatureMap out;
  out.channels = in.channels;
  out.height = (in.height + 2 - 3) / 2 + 1;
  out.width = (in.width + 2 - 3) / 2 + 1;
  out.data.resize(static_cast<std::size_t>(out.channels) * out.height * out.width);
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            if (ix < 0 || ix >= in.width) continue;
            best = std::max(best, in.at(c, iy, ix));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd global_feature(const FeatureMap& fm) {
  Eigen::VectorXd g(fm.channels);
  const std::size_t plane = static_cast<std::size_t>(fm.height) * fm.width;
  for (int c = 0; c < fm.channels; ++c) {
    double sum = 0.0;
    const float* p = fm.data.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    g[c] = sum / static_cast<double>(plane);
  }
  return g;
}

Eigen::VectorXd local_feature(const FeatureMap& fm, Vec2 coord) {
  const double u = std::clamp(coord.x * (fm.width - 1), 0.0, static_cast<double>(fm.width - 1));
  const double v = std::clamp(coord.y * (fm.height - 1), 0.0, static_cast<double>(fm.height - 1));
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, fm.width - 1);
  const int y1 = std::min(y0 + 1, fm.height - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  Eigen::VectorXd f(fm.channels);
  for (int c = 0; c < fm.channels; ++c) {
    const double c00 = fm.at(c, y0, x0);
    const double c10 = fm.at(c, y0, x1);
    const double c01 = fm.at(c, y1, x0);
    const double c11 = fm.at(c, y1, x1);
    f[c] = (1.0 - fy) * ((1.0 - fx) * c00 + fx * c10) + fy * ((1.0 - fx) * c01 + fx * c11);
  }
  return f;
}

void Backbone::build_architecture() {
  layers_.clear();
  auto add = [&](const std::string& name, int in_c, int out_c, int k, int stride, int pad) {
    ConvBn c;
    c.name = name;
    c.in_c = in_c;
    c.out_c = out_c;
    c.k = k;
    c.stride = stride;
    c.pad = pad;
    c.weight = Eigen::MatrixXf::Zero(out_c, in_c * k * k);
    c.scale = Eigen::VectorXf::Ones(out_c);
    c.shift = Eigen::VectorXf::Zero(out_c);
    layers_.push_back(std::move(c));
  };
  add("stem", 3, 64, 7, 2, 3);
  const int widths[4] = {64, 128, 256, 512};
  int in_c = 64;
  for (int s = 0; s < 4; ++s) {
    const int out_c = widths[s];
    for (int b = 0; b < 2; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      const std::string prefix = "l" + std::to_string(s + 1) + "b" + std::to_string(b);
      add(prefix + "c1", in_c, out_c, 3, stride, 1);
      add(prefix + "c2", out_c, out_c, 3, 1, 1);
      if (stride != 1 || in_c != out_c) add(prefix + "d", in_c, out_c, 1, stride, 0);
      in_c = out_c;
    }
  }
}

Backbone::Backbone(std::uint64_t seed) {
  build_architecture();
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Rng layer_rng = rng.derive(i);
    ConvBn& c = layers_[i];
    const double std_dev = std::sqrt(2.0 / static_cast<double>(c.in_c * c.k * c.k));
    for (Eigen::Index col = 0; col < c.weight.cols(); ++col)
      for (Eigen::Index row = 0; row < c.weight.rows(); ++row)
        c.weight(row, col) = static_cast<float>(layer_rng.normal() * std_dev);
  }
}

const Backbone::ConvBn& Backbone::layer(const std::string& name) const {
  for (const auto& c : layers_)
    if (c.name == name) return c;
  throw std::logic_error("backbone: unknown layer " + name);
}

FeatureMap Backbone::forward(const RasterImage& image) const {
  auto conv = [&](const std::string& name, const FeatureMap& in, bool relu) {
    const ConvBn& c = layer(name);
    if (in.channels != c.in_c) throw std::logic_error("backbone: channel mismatch at " + name);
    const int oh = (in.height + 2 * c.pad - c.k) / c.stride + 1;
    const int ow = (in.width + 2 * c.pad - c.k) / c.stride + 1;
    const int patch = c.in_c * c.k * c.k;
    Eigen::MatrixXf cols(patch, oh * ow);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float* col = cols.col(oy * ow + ox).data();
        int r = 0;
        for (int ic = 0; ic < c.in_c; ++ic) {
          for (int ky = 0; ky < c.k; ++ky) {
            const int iy = oy * c.stride - c.pad + ky;
            for (int kx = 0; kx < c.k; ++kx, ++r) {
              const int ix = ox * c.stride - c.pad + kx;
              col[r] = (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width) ? in.at(ic, iy, ix)
                                                                               : 0.0f;
            }
          }
        }
      }
    }
    Eigen::MatrixXf result = c.weight * cols;  // out_c x (oh*ow)
    FeatureMap out;
    out.channels = c.out_c;
    out.height = oh;
    out.width = ow;
    out.data.resize(static_cast<std::size_t>(c.out_c) * oh * ow);
    for (int oc = 0; oc < c.out_c; ++oc) {
      const float s = c.scale[oc];
      const float t = c.shift[oc];
      float* plane = out.data.data() + static_cast<std::size_t>(oc) * oh * ow;
      for (int p = 0; p < oh * ow; ++p) {
        float v = s * result(oc, p) + t;
        if (relu && v < 0.0f) v = 0.0f;
        plane[p] = v;
      }
    }
    return out;
  };

  auto has_layer = [&](const std::string& name) {
    for (const auto& c : layers_)
      if (c.name == name) return true;
    return false;
  };

  FeatureMap x = conv("stem", image_to_chw(image), true);
  x = max_pool_3x3_s2(x);
  for (int s = 1; s <= 4; ++s) {
    for (int b = 0; b < 2; ++b) {
      const std::string prefix = "l" + std::to_string(s) + "b" + std::to_string(b);
      FeatureMap y = conv(prefix + "c1", x, true);
      y = conv(prefix + "c2", y, false);
      FeatureMap skip = has_layer(prefix + "d") ? conv(prefix + "d", x, false) : std::move(x);
      for (std::size_t i = 0; i < y.data.size(); ++i) {
        float v = y.data[i] + skip.data[i];
        y.data[i] = v > 0.0f ? v : 0.0f;
      }
      x = std::move(y);
    }
  }
  return x;
}

std::uint64_t Backbone::weights_digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : layers_) {
    mix(c.weight.data(), static_cast<std::size_t>(c.weight.size()) * sizeof(float));
    mix(c.scale.data(), static_cast<std::size_t>(c.scale.size()) * sizeof(float));
    mix(c.shift.data(), static_cast<std::size_t>(c.shift.size()) * sizeof(float));
  }
  return h;
}

void Backbone::save(const std::string& path) const {
  nlohmann::json header = nlohmann::json::array();
  for (const auto& c : layers_) {
    header.push_back({{"name", c.name},
                      {"in_c", c.in_c},
                      {"out_c", c.out_c},
                      {"k", c.k},
                      {"stride", c.stride},
                      {"pad", c.pad}});
  }
  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open backbone weights for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& c : layers_) {
    out.write(reinterpret_cast<const char*>(c.weight.data()),
              static_cast<std::streamsize>(c.weight.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(c.scale.data()),
              static_cast<std::streamsize>(c.scale.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(c.shift.data()),
              static_cast<std::streamsize>(c.shift.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("backbone weight write failed: " + path);
}

Backbone Backbone::from_file(const std::string& path) {
  Backbone bb;
  bb.build_architecture();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open backbone weights: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("backbone weights: bad magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion) throw std::runtime_error("backbone weights: unsupported version");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("backbone weights: truncated header");
  nlohmann::json header = nlohmann::json::parse(header_str);
  if (header.size() != bb.layers_.size())
    throw std::runtime_error("backbone weights: layer count mismatch");
  for (std::size_t i = 0; i < bb.layers_.size(); ++i) {
    const auto& meta = header[i];
    ConvBn& c = bb.layers_[i];
    if (meta.at("name").get<std::string>() != c.name ||
        meta.at("in_c").get<int>() != c.in_c || meta.at("out_c").get<int>() != c.out_c ||
        meta.at("k").get<int>() != c.k)
      throw std::runtime_error("backbone weights: architecture mismatch at layer " + c.name);
    in.read(reinterpret_cast<char*>(c.weight.data()),
            static_cast<std::streamsize>(c.weight.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(c.scale.data()),
            static_cast<std::streamsize>(c.scale.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(c.shift.data()),
            static_cast<std::streamsize>(c.shift.size() * sizeof(float)));
    if (!in) throw std::runtime_error("backbone weights: truncated data");
  }
  return bb;
}

}  // namespace vagpo
