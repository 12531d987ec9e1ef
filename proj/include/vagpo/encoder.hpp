#pragma once

#include <memory>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "vagpo/autodiff.hpp"
#include "vagpo/backbone.hpp"
#include "vagpo/params.hpp"
#include "vagpo/problems.hpp"

namespace vagpo {

struct ModelConfig {
  ProblemType problem = ProblemType::Tsp;
  int dim = 128;
  int layers = 6;
  int heads = 8;
  int ff_dim = 512;
  double logit_clip = 10.0;
  std::string backbone = "resnet18";  // "resnet18" | "none"
  bool backbone_frozen = true;
  std::string backbone_weights;  // optional weight file; random fallback otherwise
  std::uint64_t backbone_seed = 2024;
  std::uint64_t init_seed = 1;

  // "default": D=128 L=6 H=8 ff=512; "small": D=64 L=3 H=8 ff=256;
  // "tiny": D=16 L=1 H=2 ff=32 (finite-difference harness scale).
  static ModelConfig preset(const std::string& name);

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Frozen-backbone outputs for one instance: row i is [g ⊕ f_i] where g is the
// pooled global vector and f_i the bilinear local sample at node i.
struct VisualConstants {
  Mat features;  // N x 2C; empty when the backbone is disabled
  bool empty() const { return features.size() == 0; }
};

class Policy;

namespace enc {

// Binds parameters of one policy into one tape; caches ids per name.
struct Ctx {
  ad::Tape& tape;
  ParamStore& store;
  const ModelConfig& cfg;
  bool grad = false;
  std::unordered_map<std::string, ad::Id> cache;

  ad::Id param(const std::string& name);
};

// Affine map of normalized coordinates (N x 2 rows) to N x D.
ad::Id positional_encoding(Ctx& ctx, const Mat& coords);
// Projects [g ⊕ f_i ⊕ P_i] rows to N x D; `visual` carries the N x 2C part.
ad::Id visual_embedding(Ctx& ctx, ad::Id pos, const Mat& visual);
// Node features embedded to D then passed through L self-attention layers.
ad::Id sequential_encode(Ctx& ctx, const Instance& inst);
// Multi-head attention with sequential rows as queries and visual rows as
// keys/values; per-head scores are scaled by beta_attn / sqrt(D).
ad::Id cross_attention(Ctx& ctx, ad::Id t, ad::Id v);
// F = T + a1 * MHA(T, V) + a2 * FF(T + a1 * MHA(T, V)).
ad::Id fuse(Ctx& ctx, ad::Id t, ad::Id v);

}  // namespace enc

class Policy {
 public:
  explicit Policy(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // nullptr when the backbone is disabled; constructed lazily otherwise.
  const Backbone* backbone() const;

  // Runs the frozen CNN on the instance raster; empty when disabled.
  VisualConstants visual_constants(const Instance& inst) const;

  struct Encoded {
    std::shared_ptr<ad::Tape> tape;
    ad::Id fused = -1;  // N x D on `tape`
    Mat fused_value;
    int n = 0;
    bool with_grad = false;
  };
  // with_grad binds parameter gradients; pass cached visual constants to skip
  // the CNN forward.
  Encoded encode(const Instance& inst, bool with_grad);
  Encoded encode(const Instance& inst, const VisualConstants& vis, bool with_grad);

  // `extra` entries (e.g. the training configuration) are merged into the
  // checkpoint header next to the model configuration.
  void save(const std::string& path, long long step = 0, const AdamOptimizer* adam = nullptr,
            const nlohmann::json* extra = nullptr) const;
  static Policy load(const std::string& path);

 private:
  void build_params();

  ModelConfig cfg_;
  ParamStore store_;
  mutable std::unique_ptr<Backbone> backbone_;
  mutable bool backbone_warned_ = false;
};

}  // namespace vagpo
