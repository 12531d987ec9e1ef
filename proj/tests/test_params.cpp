#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vagpo/common.hpp"
#include "vagpo/params.hpp"

using namespace vagpo;

namespace {

ParamStore make_store(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  auto fill = [&](Mat& m) {
    for (int i = 0; i < m.size(); ++i) m(i) = 2.0 * rng.uniform01() - 1.0;
  };
  store.create("a.w", 3, 4, fill);
  store.create("a.b", 1, 4, fill);
  store.create("scalar", 1, 1, fill);
  return store;
}

}  // namespace

TEST_CASE("param store bookkeeping") {
  ParamStore store = make_store(5);
  CHECK(store.total_size() == 3 * 4 + 4 + 1);
  CHECK(store.has("a.w"));
  CHECK_FALSE(store.has("missing"));
  CHECK_THROWS_AS(store.entry("missing"), std::invalid_argument);
  CHECK_THROWS_AS(store.create("a.w", 2, 2, [](Mat&) {}), std::invalid_argument);

  store.entry("a.w").grad.setConstant(3.0);
  store.zero_grads();
  CHECK(store.entry("a.w").grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flatten and set round-trip preserves values") {
  ParamStore store = make_store(6);
  const std::vector<double> flat = store.flatten_values();
  REQUIRE(flat.size() == store.total_size());
  ParamStore other = make_store(7);
  other.set_values(flat);
  CHECK(other.entry("a.w").value == store.entry("a.w").value);
  CHECK(other.entry("scalar").value == store.entry("scalar").value);
}

TEST_CASE("adam step matches a hand-computed update") {
  ParamStore store;
  store.create("p", 1, 1, [](Mat& m) { m(0, 0) = 2.0; });
  store.entry("p").grad(0, 0) = 0.5;

  AdamOptimizer adam;
  adam.lr = 1e-2;
  adam.weight_decay = 1e-3;
  adam.step(store);

  // One step by hand: g = grad + wd*value, first-moment bias correction.
  const double g = 0.5 + 1e-3 * 2.0;
  const double m = 0.1 * g;
  const double v = 0.001 * g * g;
  const double m_hat = m / (1.0 - 0.9);
  const double v_hat = v / (1.0 - 0.999);
  const double expected = 2.0 - 1e-2 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(store.entry("p").value(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(adam.t == 1);
}

TEST_CASE("checkpoints round-trip values, optimizer state and metadata bit-exactly") {
  testutil::TempDir dir;
  ParamStore store = make_store(8);
  store.entry("a.w").adam_m.setConstant(0.25);
  store.entry("a.w").adam_v.setConstant(0.125);

  Checkpoint meta;
  meta.config = {{"problem", "tsp"}, {"dim", 16}, {"nested", {{"k", 3}}}};
  meta.step = 42;
  meta.has_optimizer_state = true;
  meta.adam.lr = 3e-4;
  meta.adam.t = 17;
  const std::string path = dir.file("ckpt.vgpc");
  save_checkpoint(path, store, meta);

  ParamStore loaded;
  const Checkpoint back = load_checkpoint(path, loaded);
  CHECK(back.step == 42);
  CHECK(back.config["dim"] == 16);
  CHECK(back.config["nested"]["k"] == 3);
  CHECK(back.has_optimizer_state);
  CHECK(back.adam.lr == 3e-4);
  CHECK(back.adam.t == 17);
  REQUIRE(loaded.entries().size() == store.entries().size());
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    CHECK(loaded.entries()[i].name == store.entries()[i].name);
    CHECK(loaded.entries()[i].value == store.entries()[i].value);
    CHECK(loaded.entries()[i].adam_m == store.entries()[i].adam_m);
    CHECK(loaded.entries()[i].adam_v == store.entries()[i].adam_v);
  }
}

TEST_CASE("loading validates shapes against an existing store") {
  testutil::TempDir dir;
  ParamStore store = make_store(9);
  Checkpoint meta;
  const std::string path = dir.file("ckpt.vgpc");
  save_checkpoint(path, store, meta);

  ParamStore same = make_store(10);
  CHECK_NOTHROW(load_checkpoint(path, same));
  CHECK(same.entry("a.w").value == store.entry("a.w").value);

  ParamStore mismatched;
  mismatched.create("a.w", 2, 2, [](Mat&) {});
  CHECK_THROWS(load_checkpoint(path, mismatched));

  CHECK_THROWS(load_checkpoint(dir.file("missing.vgpc"), mismatched));
}
