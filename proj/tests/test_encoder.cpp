#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vagpo/encoder.hpp"
#include "vagpo/problems.hpp"

using namespace vagpo;

namespace {

Mat random_mat(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = 2.0 * rng.uniform01() - 1.0;
  return m;
}

ModelConfig fusion_config(int dim, int heads) {
  ModelConfig cfg;
  cfg.dim = dim;
  cfg.layers = 1;
  cfg.heads = heads;
  cfg.ff_dim = 8;
  cfg.backbone = "resnet18";  // allocates the fusion parameter block
  cfg.init_seed = 3;
  return cfg;
}

Mat row_softmax(const Mat& scores) {
  Mat out = scores;
  for (int r = 0; r < out.rows(); ++r) {
    Eigen::RowVectorXd row = out.row(r);
    const double mx = row.maxCoeff();
    Eigen::ArrayXd e = (row.array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix().transpose();
  }
  return out;
}

// Reference multi-head cross-attention with contiguous column-block heads.
Mat reference_cross_attention(const ParamStore& store, const Mat& t_in, const Mat& v_in, int dim,
                              int heads, double beta) {
  const Mat q = t_in * store.entry("fuse.attn.wq").value;
  const Mat k = v_in * store.entry("fuse.attn.wk").value;
  const Mat v = v_in * store.entry("fuse.attn.wv").value;
  const int hd = dim / heads;
  Mat merged(t_in.rows(), dim);
  for (int h = 0; h < heads; ++h) {
    const Mat qh = q.middleCols(h * hd, hd);
    const Mat kh = k.middleCols(h * hd, hd);
    const Mat vh = v.middleCols(h * hd, hd);
    const Mat scores = (qh * kh.transpose()) * (beta / std::sqrt(static_cast<double>(dim)));
    merged.middleCols(h * hd, hd) = row_softmax(scores) * vh;
  }
  return merged * store.entry("fuse.attn.wo").value;
}

}  // namespace

TEST_CASE("model presets and json round-trip") {
  const ModelConfig small = ModelConfig::preset("small");
  CHECK(small.dim == 64);
  CHECK(small.layers == 3);
  CHECK(small.heads == 8);
  CHECK(small.ff_dim == 256);
  const ModelConfig tiny = ModelConfig::preset("tiny");
  CHECK(tiny.dim == 16);
  CHECK(tiny.layers == 1);
  CHECK(tiny.heads == 2);
  CHECK_THROWS_AS(ModelConfig::preset("huge"), std::invalid_argument);

  ModelConfig cfg = ModelConfig::preset("default");
  cfg.problem = ProblemType::Cvrp;
  cfg.logit_clip = 7.5;
  cfg.backbone = "none";
  cfg.backbone_weights = "w.vgbb";
  cfg.backbone_seed = 99;
  cfg.init_seed = 5;
  const ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.problem == cfg.problem);
  CHECK(back.dim == cfg.dim);
  CHECK(back.layers == cfg.layers);
  CHECK(back.heads == cfg.heads);
  CHECK(back.ff_dim == cfg.ff_dim);
  CHECK(back.logit_clip == cfg.logit_clip);
  CHECK(back.backbone == cfg.backbone);
  CHECK(back.backbone_weights == cfg.backbone_weights);
  CHECK(back.backbone_seed == cfg.backbone_seed);
  CHECK(back.init_seed == cfg.init_seed);
}

TEST_CASE("policy construction validates its configuration") {
  ModelConfig bad = ModelConfig::preset("tiny");
  bad.heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(Policy{bad}, std::invalid_argument);
  ModelConfig vgg = ModelConfig::preset("tiny");
  vgg.backbone = "vgg16";
  CHECK_THROWS_AS(Policy{vgg}, std::invalid_argument);
}

TEST_CASE("positional encoding is the affine map of the coordinates") {
  Policy policy(fusion_config(4, 1));
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const Mat coords = random_mat(5, 2, 11);
  const Mat got = tape.value(enc::positional_encoding(ctx, coords));
  const Mat expect = (coords * policy.params().entry("vis.pos.w").value).rowwise() +
                     policy.params().entry("vis.pos.b").value.row(0);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);

  const Mat bad = random_mat(5, 3, 12);
  CHECK_THROWS_AS(enc::positional_encoding(ctx, bad), std::invalid_argument);
}

TEST_CASE("visual embedding projects the joined visual and positional rows") {
  Policy policy(fusion_config(4, 1));
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const Mat coords = random_mat(3, 2, 21);
  const Mat visual = random_mat(3, 2 * 512, 22);
  const ad::Id pos = enc::positional_encoding(ctx, coords);
  const Mat pos_val = tape.value(pos);
  const Mat got = tape.value(enc::visual_embedding(ctx, pos, visual));
  REQUIRE(got.rows() == 3);
  REQUIRE(got.cols() == 4);

  Mat joined(3, 2 * 512 + 4);
  joined << visual, pos_val;
  const Mat expect = (joined * policy.params().entry("vis.proj.w").value).rowwise() +
                     policy.params().entry("vis.proj.b").value.row(0);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-10);

  const Mat narrow = random_mat(3, 7, 23);
  CHECK_THROWS_AS(enc::visual_embedding(ctx, pos, narrow), std::invalid_argument);
}

TEST_CASE("sequential encoding is equivariant under node permutation") {
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.backbone = "none";
  Policy policy(cfg);
  const Instance inst = generate_tsp(6, 17);
  const Mat base = policy.encode(inst, false).fused_value;

  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Instance shuffled = inst;
  for (int i = 0; i < 6; ++i) shuffled.coords[i] = inst.coords[perm[i]];
  const Mat permuted = policy.encode(shuffled, false).fused_value;
  for (int i = 0; i < 6; ++i)
    CHECK((permuted.row(i) - base.row(perm[i])).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("duplicate nodes embed identically and encoding is reproducible") {
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.backbone = "none";
  Policy policy(cfg);
  Instance inst;
  inst.type = ProblemType::Tsp;
  inst.coords = {{0.2, 0.9}, {0.55, 0.4}, {0.55, 0.4}, {0.8, 0.1}};
  const Mat f = policy.encode(inst, false).fused_value;
  CHECK((f.row(1) - f.row(2)).cwiseAbs().maxCoeff() == 0.0);

  const Mat again = policy.encode(inst, false).fused_value;
  CHECK((again - f).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cross attention with one key reduces to its projected value") {
  const int dim = 4;
  Policy policy(fusion_config(dim, 1));
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const Mat t_in = random_mat(1, dim, 31);
  const Mat v_in = random_mat(1, dim, 32);
  const Mat got =
      tape.value(enc::cross_attention(ctx, tape.constant(t_in), tape.constant(v_in)));
  const Mat expect = v_in * policy.params().entry("fuse.attn.wv").value *
                     policy.params().entry("fuse.attn.wo").value;
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero attention temperature yields a uniform average over keys") {
  const int dim = 4;
  Policy policy(fusion_config(dim, 2));
  policy.params().entry("fuse.beta").value(0, 0) = 0.0;
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const Mat t_in = random_mat(3, dim, 41);
  const Mat v_in = random_mat(5, dim, 42);
  const Mat got =
      tape.value(enc::cross_attention(ctx, tape.constant(t_in), tape.constant(v_in)));
  // All scores are zero, so every query attends uniformly to the 5 keys.
  const Mat values = v_in * policy.params().entry("fuse.attn.wv").value;
  const Mat mean_row = values.colwise().mean();
  const Mat expect_row = mean_row * policy.params().entry("fuse.attn.wo").value;
  for (int r = 0; r < 3; ++r) CHECK((got.row(r) - expect_row).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross attention matches an explicit per-head reference") {
  const int dim = 4;
  Policy policy(fusion_config(dim, 2));
  policy.params().entry("fuse.beta").value(0, 0) = 1.3;
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const Mat t_in = random_mat(3, dim, 51);
  const Mat v_in = random_mat(2, dim, 52);
  const Mat got =
      tape.value(enc::cross_attention(ctx, tape.constant(t_in), tape.constant(v_in)));
  const Mat expect = reference_cross_attention(policy.params(), t_in, v_in, dim, 2, 1.3);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fusion at zero mixing weights returns the sequential encoding unchanged") {
  const int dim = 4;
  Policy policy(fusion_config(dim, 2));  // alpha1 = alpha2 = 0 at initialization
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const Mat t_in = random_mat(4, dim, 61);
  const Mat v_in = random_mat(4, dim, 62);
  const ad::Id t = tape.constant(t_in);
  const Mat fused = tape.value(enc::fuse(ctx, t, tape.constant(v_in)));
  CHECK((fused.array() == t_in.array()).all());
}

TEST_CASE("fusion composes the attention and feed-forward residuals") {
  const int dim = 4;
  Policy policy(fusion_config(dim, 2));
  ParamStore& store = policy.params();
  store.entry("fuse.alpha1").value(0, 0) = 0.7;
  store.entry("fuse.alpha2").value(0, 0) = 0.0;
  const Mat t_in = random_mat(3, dim, 71);
  const Mat v_in = random_mat(3, dim, 72);

  Mat attn_val;
  {
    ad::Tape tape;
    enc::Ctx ctx{tape, store, policy.config(), false, {}};
    attn_val = tape.value(enc::cross_attention(ctx, tape.constant(t_in), tape.constant(v_in)));
  }

  // alpha2 = 0: only the attention residual contributes.
  {
    ad::Tape tape;
    enc::Ctx ctx{tape, store, policy.config(), false, {}};
    const Mat fused = tape.value(enc::fuse(ctx, tape.constant(t_in), tape.constant(v_in)));
    CHECK((fused - (t_in + 0.7 * attn_val)).cwiseAbs().maxCoeff() < 1e-12);
  }

  // Both residuals: F = T1 + alpha2 * FF(T1) with T1 = T + alpha1 * MHA.
  store.entry("fuse.alpha2").value(0, 0) = 0.4;
  {
    ad::Tape tape;
    enc::Ctx ctx{tape, store, policy.config(), false, {}};
    const Mat fused = tape.value(enc::fuse(ctx, tape.constant(t_in), tape.constant(v_in)));
    const Mat t1 = t_in + 0.7 * attn_val;
    const Mat hidden = ((t1 * store.entry("fuse.ff.w1").value).rowwise() +
                        store.entry("fuse.ff.b1").value.row(0))
                           .cwiseMax(0.0);
    const Mat ff = (hidden * store.entry("fuse.ff.w2").value).rowwise() +
                   store.entry("fuse.ff.b2").value.row(0);
    CHECK((fused - (t1 + 0.4 * ff)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("fusion parameter gradients agree with central finite differences") {
  const int dim = 4;
  Policy policy(fusion_config(dim, 2));
  ParamStore& store = policy.params();
  store.entry("fuse.alpha1").value(0, 0) = 0.3;
  store.entry("fuse.alpha2").value(0, 0) = 0.25;
  store.entry("fuse.beta").value(0, 0) = 1.1;
  const Mat t_in = random_mat(3, dim, 81);
  const Mat v_in = random_mat(3, dim, 82);
  const Mat weights = random_mat(3, dim, 83);  // fixed linear readout of the fused rows

  auto loss_value = [&]() {
    ad::Tape tape;
    enc::Ctx ctx{tape, store, policy.config(), false, {}};
    const ad::Id fused = enc::fuse(ctx, tape.constant(t_in), tape.constant(v_in));
    return tape.value(tape.dot_const(fused, weights))(0, 0);
  };

  store.zero_grads();
  {
    ad::Tape tape;
    enc::Ctx ctx{tape, store, policy.config(), true, {}};
    const ad::Id fused = enc::fuse(ctx, tape.constant(t_in), tape.constant(v_in));
    tape.backward(tape.dot_const(fused, weights));
  }

  const char* names[] = {"fuse.alpha1", "fuse.alpha2", "fuse.beta",  "fuse.attn.wq",
                         "fuse.attn.wk", "fuse.attn.wv", "fuse.attn.wo", "fuse.ff.w1",
                         "fuse.ff.w2",   "fuse.ff.b1",   "fuse.ff.b2"};
  const double h = 1e-6;
  for (const char* name : names) {
    auto& e = store.entry(name);
    const int r = 0;
    const int c = static_cast<int>(e.value.cols()) - 1;
    const double keep = e.value(r, c);
    e.value(r, c) = keep + h;
    const double up = loss_value();
    e.value(r, c) = keep - h;
    const double down = loss_value();
    e.value(r, c) = keep;
    const double fd = (up - down) / (2.0 * h);
    const double analytic = e.grad(r, c);
    const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-6});
    INFO(name);
    CHECK(std::fabs(fd - analytic) / denom < 1e-4);
  }
}

TEST_CASE("policy checkpoints restore parameters and configuration") {
  testutil::TempDir dir;
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.backbone = "none";
  cfg.problem = ProblemType::Cvrp;
  Policy policy(cfg);
  const std::string path = dir.file("policy.vgpc");
  AdamOptimizer adam;
  adam.t = 9;
  const nlohmann::json extra = {{"agpo", {{"beta_w", 0.5}}}};
  policy.save(path, 1234, &adam, &extra);

  Policy loaded = Policy::load(path);
  CHECK(loaded.config().problem == ProblemType::Cvrp);
  CHECK(loaded.config().dim == cfg.dim);
  CHECK(loaded.config().backbone == "none");
  const auto& a = policy.params().entries();
  const auto& b = loaded.params().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK((a[i].value.array() == b[i].value.array()).all());
  }

  ParamStore probe;
  const Checkpoint meta = load_checkpoint(path, probe);
  CHECK(meta.step == 1234);
  CHECK(meta.config["agpo"]["beta_w"] == 0.5);
  CHECK(meta.adam.t == 9);

  const Instance inst = generate_cvrp(6, 0, 5);
  const Mat f1 = policy.encode(inst, false).fused_value;
  const Mat f2 = loaded.encode(inst, false).fused_value;
  CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode rejects instances of the wrong problem type") {
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.backbone = "none";
  Policy policy(cfg);  // TSP model
  const Instance cvrp = generate_cvrp(5, 0, 3);
  CHECK_THROWS_AS(policy.encode(cvrp, false), std::invalid_argument);
}
