#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "test_util.hpp"
#include "vagpo/backbone.hpp"
#include "vagpo/problems.hpp"
#include "vagpo/raster.hpp"

using namespace vagpo;

namespace {

FeatureMap tiny_map() {
  // 2 channels on a 2x2 grid; channel 1 = channel 0 + 10.
  FeatureMap fm;
  fm.channels = 2;
  fm.height = 2;
  fm.width = 2;
  fm.data = {0.0f, 1.0f, 2.0f, 3.0f, 10.0f, 11.0f, 12.0f, 13.0f};
  return fm;
}

}  // namespace

TEST_CASE("global feature is the per-channel spatial mean") {
  const FeatureMap fm = tiny_map();
  const Eigen::VectorXd g = global_feature(fm);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(11.5).epsilon(1e-12));
}

TEST_CASE("global feature matches an independent double-precision re-summation") {
  FeatureMap fm;
  fm.channels = 3;
  fm.height = 5;
  fm.width = 4;
  fm.data.resize(static_cast<std::size_t>(fm.channels) * fm.height * fm.width);
  Rng rng(99);
  for (auto& v : fm.data) v = static_cast<float>(rng.uniform01());
  const Eigen::VectorXd g = global_feature(fm);
  for (int c = 0; c < fm.channels; ++c) {
    double sum = 0.0;
    for (int y = 0; y < fm.height; ++y)
      for (int x = 0; x < fm.width; ++x) sum += fm.at(c, y, x);
    CHECK(g[c] == doctest::Approx(sum / 20.0).epsilon(1e-12));
  }
}

TEST_CASE("local feature hits grid cells exactly and interpolates midpoints") {
  const FeatureMap fm = tiny_map();
  CHECK(local_feature(fm, {0.0, 0.0})[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(local_feature(fm, {1.0, 0.0})[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(local_feature(fm, {0.0, 1.0})[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(local_feature(fm, {1.0, 1.0})[0] == doctest::Approx(3.0).epsilon(1e-12));
  // Center of the unit square averages all four cells.
  CHECK(local_feature(fm, {0.5, 0.5})[0] == doctest::Approx(1.5).epsilon(1e-12));
  // Quarter point along the top edge.
  CHECK(local_feature(fm, {0.25, 0.0})[0] == doctest::Approx(0.25).epsilon(1e-12));
  // Channels interpolate independently: channel 1 is channel 0 shifted by 10.
  const Eigen::VectorXd mid = local_feature(fm, {0.37, 0.81});
  CHECK(mid[1] == doctest::Approx(mid[0] + 10.0).epsilon(1e-12));
  // Out-of-range coordinates clamp to the border.
  CHECK(local_feature(fm, {-0.5, 2.0})[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("local feature matches an explicit bilinear formula on a larger grid") {
  FeatureMap fm;
  fm.channels = 2;
  fm.height = 7;
  fm.width = 7;
  fm.data.resize(static_cast<std::size_t>(fm.channels) * 49);
  Rng rng(4242);
  for (auto& v : fm.data) v = static_cast<float>(rng.uniform01());

  // x = 3/6 lands exactly on grid column 3.
  const Eigen::VectorXd on_grid = local_feature(fm, {3.0 / 6.0, 5.0 / 6.0});
  CHECK(on_grid[0] == doctest::Approx(fm.at(0, 5, 3)).epsilon(1e-12));
  CHECK(on_grid[1] == doctest::Approx(fm.at(1, 5, 3)).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const Vec2 c{rng.uniform01(), rng.uniform01()};
    const Eigen::VectorXd got = local_feature(fm, c);
    const double u = c.x * 6.0;
    const double v = c.y * 6.0;
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const int x1 = std::min(x0 + 1, 6);
    const int y1 = std::min(y0 + 1, 6);
    const double fx = u - x0;
    const double fy = v - y0;
    for (int ch = 0; ch < 2; ++ch) {
      const double expect = (1.0 - fy) * ((1.0 - fx) * fm.at(ch, y0, x0) + fx * fm.at(ch, y0, x1)) +
                            fy * ((1.0 - fx) * fm.at(ch, y1, x0) + fx * fm.at(ch, y1, x1));
      CHECK(got[ch] == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("backbone construction is deterministic and seed-sensitive") {
  const Backbone a(2024);
  const Backbone b(2024);
  const Backbone c(7);
  CHECK(a.weights_digest() == b.weights_digest());
  CHECK(a.weights_digest() != c.weights_digest());
  CHECK(a.out_channels() == 512);
}

TEST_CASE("backbone forward yields a 512x7x7 map and reacts to content") {
  const Backbone net(2024);
  const Instance inst = generate_tsp(12, 31);
  const FeatureMap fm = net.forward(rasterize(inst));
  CHECK(fm.channels == 512);
  CHECK(fm.height == 7);
  CHECK(fm.width == 7);
  for (const float v : fm.data) REQUIRE(std::isfinite(v));

  RasterImage blank;
  blank.height = kRasterSize;
  blank.width = kRasterSize;
  blank.pixels.assign(static_cast<std::size_t>(kRasterSize) * kRasterSize * 3, 0.0f);
  const FeatureMap empty = net.forward(blank);
  const Eigen::VectorXd g_inst = global_feature(fm);
  const Eigen::VectorXd g_empty = global_feature(empty);
  CHECK((g_inst - g_empty).norm() > 1e-6);

  // Same image twice gives bit-identical activations.
  const FeatureMap again = net.forward(rasterize(inst));
  CHECK(again.data == fm.data);
}

TEST_CASE("backbone weights survive a save/load round-trip") {
  testutil::TempDir dir;
  const Backbone net(77);
  const std::string path = dir.file("weights.vgbb");
  net.save(path);
  const Backbone loaded = Backbone::from_file(path);
  CHECK(loaded.weights_digest() == net.weights_digest());

  const Instance inst = generate_tsp(6, 3);
  const FeatureMap a = net.forward(rasterize(inst));
  const FeatureMap b = loaded.forward(rasterize(inst));
  CHECK(a.data == b.data);

  CHECK_THROWS(Backbone::from_file(dir.file("missing.vgbb")));
}
