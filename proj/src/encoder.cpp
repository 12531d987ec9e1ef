#include "vagpo/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "vagpo/raster.hpp"

namespace vagpo {

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig cfg;
  if (name == "default") {
    cfg.dim = 128;
    cfg.layers = 6;
    cfg.heads = 8;
    cfg.ff_dim = 512;
  } else if (name == "small") {
    cfg.dim = 64;
    cfg.layers = 3;
    cfg.heads = 8;
    cfg.ff_dim = 256;
  } else if (name == "tiny") {
    cfg.dim = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 32;
  } else {
    throw std::invalid_argument("unknown model preset: " + name);
  }
  return cfg;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"problem", to_string(problem)},
          {"dim", dim},
          {"layers", layers},
          {"heads", heads},
          {"ff_dim", ff_dim},
          {"logit_clip", logit_clip},
          {"backbone", backbone},
          {"backbone_frozen", backbone_frozen},
          {"backbone_weights", backbone_weights},
          {"backbone_seed", backbone_seed},
          {"init_seed", init_seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.problem = problem_type_from_string(j.value("problem", std::string("tsp")));
  cfg.dim = j.value("dim", cfg.dim);
  cfg.layers = j.value("layers", cfg.layers);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.ff_dim = j.value("ff_dim", cfg.ff_dim);
  cfg.logit_clip = j.value("logit_clip", cfg.logit_clip);
  cfg.backbone = j.value("backbone", cfg.backbone);
  cfg.backbone_frozen = j.value("backbone_frozen", cfg.backbone_frozen);
  cfg.backbone_weights = j.value("backbone_weights", cfg.backbone_weights);
  cfg.backbone_seed = j.value("backbone_seed", cfg.backbone_seed);
  cfg.init_seed = j.value("init_seed", cfg.init_seed);
  return cfg;
}

namespace enc {

ad::Id Ctx::param(const std::string& name) {
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  auto& e = store.entry(name);
  const ad::Id id = tape.param(&e.value, grad ? &e.grad : nullptr);
  cache.emplace(name, id);
  return id;
}

namespace {

// Affine x*W + b with b broadcast over rows.
ad::Id affine(Ctx& ctx, ad::Id x, const std::string& w, const std::string& b) {
  return ctx.tape.add_row_broadcast(ctx.tape.matmul(x, ctx.param(w)), ctx.param(b));
}

ad::Id layer_norm_affine(Ctx& ctx, ad::Id x, const std::string& prefix) {
  ad::Id normed = ctx.tape.layer_norm_rows(x);
  normed = ctx.tape.mul_row_broadcast(normed, ctx.param(prefix + ".g"));
  return ctx.tape.add_row_broadcast(normed, ctx.param(prefix + ".b"));
}

ad::Id feed_forward(Ctx& ctx, ad::Id x, const std::string& prefix) {
  ad::Id hidden = ctx.tape.relu(affine(ctx, x, prefix + ".w1", prefix + ".b1"));
  return affine(ctx, hidden, prefix + ".w2", prefix + ".b2");
}

// Multi-head attention with packed D x D projections; heads live in
// contiguous column blocks. `scale_param` (1x1), when named, multiplies the
// raw scores on top of `base_scale`.
ad::Id multi_head_attention(Ctx& ctx, ad::Id q_src, ad::Id kv_src, const std::string& prefix,
                            double base_scale, const std::string& scale_param) {
  const int dim = ctx.cfg.dim;
  const int heads = ctx.cfg.heads;
  if (dim % heads != 0) throw std::invalid_argument("model dim must be divisible by head count");
  const int head_dim = dim / heads;
  ad::Tape& t = ctx.tape;
  const ad::Id q = t.matmul(q_src, ctx.param(prefix + ".wq"));
  const ad::Id k = t.matmul(kv_src, ctx.param(prefix + ".wk"));
  const ad::Id v = t.matmul(kv_src, ctx.param(prefix + ".wv"));
  ad::Id merged = -1;
  for (int h = 0; h < heads; ++h) {
    const ad::Id qh = t.slice_cols(q, h * head_dim, head_dim);
    const ad::Id kh = t.slice_cols(k, h * head_dim, head_dim);
    const ad::Id vh = t.slice_cols(v, h * head_dim, head_dim);
    ad::Id scores = t.scale(t.matmul_nt(qh, kh), base_scale);
    if (!scale_param.empty()) scores = t.scale_by(scores, ctx.param(scale_param));
    const ad::Id head = t.matmul(t.softmax_rows(scores), vh);
    merged = (h == 0) ? head : t.concat_cols(merged, head);
  }
  return t.matmul(merged, ctx.param(prefix + ".wo"));
}

Mat input_features(const Instance& inst) {
  const int n = inst.n();
  const bool cvrp = inst.is_cvrp();
  Mat x(n, cvrp ? 4 : 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = inst.coords[i].x;
    x(i, 1) = inst.coords[i].y;
    if (cvrp) {
      x(i, 2) = (i == inst.depot) ? 0.0 : inst.normalized_demand(i);
      x(i, 3) = (i == inst.depot) ? 1.0 : 0.0;
    }
  }
  return x;
}

}  // namespace

ad::Id positional_encoding(Ctx& ctx, const Mat& coords) {
  if (coords.cols() != 2) throw std::invalid_argument("positional encoding expects N x 2 input");
  return affine(ctx, ctx.tape.constant(coords), "vis.pos.w", "vis.pos.b");
}

ad::Id visual_embedding(Ctx& ctx, ad::Id pos, const Mat& visual) {
  const auto& w = ctx.store.entry("vis.proj.w").value;
  if (visual.cols() + ctx.cfg.dim != w.rows())
    throw std::invalid_argument("visual feature width does not match projection");
  const ad::Id joined = ctx.tape.concat_cols(ctx.tape.constant(visual), pos);
  return affine(ctx, joined, "vis.proj.w", "vis.proj.b");
}

ad::Id sequential_encode(Ctx& ctx, const Instance& inst) {
  ad::Id x = affine(ctx, ctx.tape.constant(input_features(inst)), "embed.w", "embed.b");
  const double scale = 1.0 / std::sqrt(static_cast<double>(ctx.cfg.dim / ctx.cfg.heads));
  for (int l = 0; l < ctx.cfg.layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    const ad::Id attended = multi_head_attention(ctx, x, x, p + ".attn", scale, "");
    x = layer_norm_affine(ctx, ctx.tape.add(x, attended), p + ".ln1");
    const ad::Id ff = feed_forward(ctx, x, p + ".ff");
    x = layer_norm_affine(ctx, ctx.tape.add(x, ff), p + ".ln2");
  }
  return x;
}

ad::Id cross_attention(Ctx& ctx, ad::Id t, ad::Id v) {
  const double base = 1.0 / std::sqrt(static_cast<double>(ctx.cfg.dim));
  return multi_head_attention(ctx, t, v, "fuse.attn", base, "fuse.beta");
}

ad::Id fuse(Ctx& ctx, ad::Id t, ad::Id v) {
  ad::Tape& tape = ctx.tape;
  const ad::Id attended = cross_attention(ctx, t, v);
  const ad::Id t1 = tape.add(t, tape.scale_by(attended, ctx.param("fuse.alpha1")));
  const ad::Id ff = feed_forward(ctx, t1, "fuse.ff");
  return tape.add(t1, tape.scale_by(ff, ctx.param("fuse.alpha2")));
}

}  // namespace enc

Policy::Policy(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg_.dim <= 0 || cfg_.layers < 0 || cfg_.heads <= 0 || cfg_.ff_dim <= 0)
    throw std::invalid_argument("invalid model dimensions");
  if (cfg_.dim % cfg_.heads != 0)
    throw std::invalid_argument("model dim must be divisible by head count");
  if (cfg_.backbone != "resnet18" && cfg_.backbone != "none")
    throw std::invalid_argument("unknown backbone: " + cfg_.backbone);
  build_params();
}

void Policy::build_params() {
  Rng rng(cfg_.init_seed);
  std::uint64_t stream = 0;
  auto xavier = [&](int rows, int cols) {
    Rng r = rng.derive(stream++);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return std::function<void(Mat&)>([r, limit](Mat& m) mutable {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index rr = 0; rr < m.rows(); ++rr)
          m(rr, c) = (2.0 * r.uniform01() - 1.0) * limit;
    });
  };
  auto zeros = [](Mat&) {};
  auto ones = [](Mat& m) { m.setOnes(); };
  auto weight = [&](const std::string& name, int rows, int cols) {
    store_.create(name, rows, cols, xavier(rows, cols));
  };
  auto bias = [&](const std::string& name, int cols) { store_.create(name, 1, cols, zeros); };

  const int d = cfg_.dim;
  const int in_dim = (cfg_.problem == ProblemType::Cvrp) ? 4 : 2;
  weight("embed.w", in_dim, d);
  bias("embed.b", d);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) weight(p + w, d, d);
    store_.create(p + ".ln1.g", 1, d, ones);
    bias(p + ".ln1.b", d);
    weight(p + ".ff.w1", d, cfg_.ff_dim);
    bias(p + ".ff.b1", cfg_.ff_dim);
    weight(p + ".ff.w2", cfg_.ff_dim, d);
    bias(p + ".ff.b2", d);
    store_.create(p + ".ln2.g", 1, d, ones);
    bias(p + ".ln2.b", d);
  }
  if (cfg_.backbone != "none") {
    const int c2 = 2 * 512;  // [g ⊕ f_i] width from the backbone stage
    weight("vis.pos.w", 2, d);
    bias("vis.pos.b", d);
    weight("vis.proj.w", c2 + d, d);
    bias("vis.proj.b", d);
    for (const char* w : {"fuse.attn.wq", "fuse.attn.wk", "fuse.attn.wv", "fuse.attn.wo"})
      weight(w, d, d);
    store_.create("fuse.alpha1", 1, 1, zeros);
    store_.create("fuse.alpha2", 1, 1, zeros);
    store_.create("fuse.beta", 1, 1, ones);
    weight("fuse.ff.w1", d, cfg_.ff_dim);
    bias("fuse.ff.b1", cfg_.ff_dim);
    weight("fuse.ff.w2", cfg_.ff_dim, d);
    bias("fuse.ff.b2", d);
  }
  weight("dec.wq", d, d);
  weight("dec.wk", d, d);
}

const Backbone* Policy::backbone() const {
  if (cfg_.backbone == "none") return nullptr;
  if (!backbone_) {
    bool loaded = false;
    if (!cfg_.backbone_weights.empty() && std::filesystem::exists(cfg_.backbone_weights)) {
      backbone_ = std::make_unique<Backbone>(Backbone::from_file(cfg_.backbone_weights));
      loaded = true;
    }
    if (!loaded) {
      if (!backbone_warned_) {
        std::fprintf(stderr,
                     "[vagpo] warning: no pretrained backbone weights%s%s; "
                     "using fixed-seed random initialization (seed %llu)\n",
                     cfg_.backbone_weights.empty() ? "" : " at ",
                     cfg_.backbone_weights.c_str(),
                     static_cast<unsigned long long>(cfg_.backbone_seed));
        backbone_warned_ = true;
      }
      backbone_ = std::make_unique<Backbone>(cfg_.backbone_seed);
    }
  }
  return backbone_.get();
}

VisualConstants Policy::visual_constants(const Instance& inst) const {
  VisualConstants vis;
  const Backbone* bb = backbone();
  if (bb == nullptr) return vis;
  const RasterImage image = rasterize(inst);
  const FeatureMap fm = bb->forward(image);
  const Eigen::VectorXd g = global_feature(fm);
  const int c = fm.channels;
  vis.features = Mat(inst.n(), 2 * c);
  for (int i = 0; i < inst.n(); ++i) {
    vis.features.row(i).head(c) = g.transpose();
    vis.features.row(i).tail(c) = local_feature(fm, inst.coords[i]).transpose();
  }
  return vis;
}

Policy::Encoded Policy::encode(const Instance& inst, bool with_grad) {
  return encode(inst, visual_constants(inst), with_grad);
}

Policy::Encoded Policy::encode(const Instance& inst, const VisualConstants& vis, bool with_grad) {
  inst.check();
  if ((cfg_.problem == ProblemType::Cvrp) != inst.is_cvrp())
    throw std::invalid_argument("instance problem type does not match model config");
  Encoded out;
  out.tape = std::make_shared<ad::Tape>();
  out.n = inst.n();
  out.with_grad = with_grad;
  enc::Ctx ctx{*out.tape, store_, cfg_, with_grad, {}};
  const ad::Id t = enc::sequential_encode(ctx, inst);
  if (cfg_.backbone == "none") {
    out.fused = t;
  } else {
    if (vis.empty()) throw std::invalid_argument("visual constants missing for enabled backbone");
    Mat coords(inst.n(), 2);
    for (int i = 0; i < inst.n(); ++i) {
      coords(i, 0) = inst.coords[i].x;
      coords(i, 1) = inst.coords[i].y;
    }
    const ad::Id pos = enc::positional_encoding(ctx, coords);
    const ad::Id v = enc::visual_embedding(ctx, pos, vis.features);
    out.fused = enc::fuse(ctx, t, v);
  }
  out.fused_value = out.tape->value(out.fused);
  return out;
}

void Policy::save(const std::string& path, long long step, const AdamOptimizer* adam,
                  const nlohmann::json* extra) const {
  Checkpoint meta;
  meta.config = cfg_.to_json();
  if (extra != nullptr)
    for (const auto& [key, value] : extra->items()) meta.config[key] = value;
  meta.step = step;
  if (adam != nullptr) {
    meta.has_optimizer_state = true;
    meta.adam = *adam;
  }
  save_checkpoint(path, store_, meta);
}

Policy Policy::load(const std::string& path) {
  ParamStore probe;
  const Checkpoint meta = load_checkpoint(path, probe);
  Policy policy(ModelConfig::from_json(meta.config));
  load_checkpoint(path, policy.params());
  return policy;
}

}  // namespace vagpo
