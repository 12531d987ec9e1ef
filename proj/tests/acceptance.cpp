// Acceptance suite: end-to-end checks of the toolkit's headline behaviors.
// Each criterion prints exactly one PASS/FAIL line; the process exits
// nonzero if any criterion fails. Pass criterion numbers as arguments to
// run a subset, e.g. `vagpo_acceptance 1 5 9`.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vagpo/agpo.hpp"
#include "vagpo/config.hpp"
#include "vagpo/decoder.hpp"
#include "vagpo/oracles.hpp"
#include "vagpo/raster.hpp"

namespace {

using namespace vagpo;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

ModelConfig tiny_model(ProblemType problem, const std::string& backbone, std::uint64_t seed) {
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.problem = problem;
  cfg.backbone = backbone;
  cfg.init_seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------
// 1. The closed-form probability that at most one raster cell receives two or
//    more points must exceed 0.99 for n=100 on a 224x224 grid and agree with
//    a Monte-Carlo estimate of the exact balls-in-bins event.
Outcome criterion_collision_probability() {
  const int n = 100;
  const int cells = 224 * 224;
  const double analytic = at_most_one_collision_prob(n, cells);

  const int trials = 1000000;
  Rng rng(0x1bb5u);
  std::array<int, 100> draws{};
  long long successes = 0;
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i) draws[static_cast<std::size_t>(i)] = rng.uniform_int(0, cells - 1);
    std::sort(draws.begin(), draws.end());
    int crowded_cells = 0;
    int run = 1;
    for (int i = 1; i <= n; ++i) {
      if (i < n && draws[static_cast<std::size_t>(i)] == draws[static_cast<std::size_t>(i - 1)]) {
        ++run;
      } else {
        if (run >= 2) ++crowded_cells;
        run = 1;
      }
    }
    if (crowded_cells <= 1) ++successes;
  }
  const double mc = static_cast<double>(successes) / static_cast<double>(trials);
  const double diff = std::fabs(mc - analytic);

  Outcome out;
  out.pass = analytic > 0.99 && diff < 0.005;
  out.detail = format("analytic=%.6f  monte_carlo=%.6f  |diff|=%.2e", analytic, mc, diff);
  return out;
}

// ---------------------------------------------------------------------------
// 2. Sampled rollouts from an untrained policy must always construct valid
//    solutions, and the per-step distributions must put exactly zero
//    probability on infeasible nodes.
Outcome criterion_rollout_feasibility() {
  int valid = 0, total = 0, masked_checked = 0;
  double worst_mass = 0.0;

  for (int problem = 0; problem < 2; ++problem) {
    const bool cvrp = problem == 1;
    const ProblemType type = cvrp ? ProblemType::Cvrp : ProblemType::Tsp;
    Policy policy(tiny_model(type, "none", 0x22u));
    Rng pick(0x20260213u + static_cast<std::uint64_t>(problem));

    std::uint64_t s = 0xfeedu + static_cast<std::uint64_t>(problem);
    std::vector<Instance> instances;
    std::vector<TrajectoryBatch> batches;
    for (int i = 0; i < 50; ++i) {
      s = splitmix64(s);
      Instance inst = cvrp ? generate_cvrp(20, 0, s) : generate_tsp(20, s);
      TrajectoryBatch batch = rollout_multistart(policy, inst, DecodeMode::Sample, s);
      for (const Trajectory& traj : batch.trajectories) {
        ++total;
        if (cvrp) {
          const RouteSet routes = routes_from_sequence(inst, traj.nodes);
          if (validate_routes(inst, routes).ok()) ++valid;
        } else {
          if (validate_tour(inst, Tour{traj.nodes}).ok()) ++valid;
        }
      }
      instances.push_back(std::move(inst));
      batches.push_back(std::move(batch));
    }

    // Re-enter 50 random decode states per problem and inspect the
    // distribution the policy would sample from next.
    for (int c = 0; c < 50; ++c) {
      const int i = pick.uniform_int(0, static_cast<int>(instances.size()) - 1);
      const Instance& inst = instances[static_cast<std::size_t>(i)];
      const TrajectoryBatch& batch = batches[static_cast<std::size_t>(i)];
      const Trajectory& traj = batch.trajectories[static_cast<std::size_t>(
          pick.uniform_int(0, static_cast<int>(batch.trajectories.size()) - 1))];
      const int lo = cvrp ? 2 : 1;
      const int hi = static_cast<int>(traj.nodes.size()) - 1;
      const int prefix = pick.uniform_int(lo, hi);

      DecodeState state = initial_state(inst);
      for (int k = cvrp ? 1 : 0; k < prefix; ++k) advance_state(inst, state, traj.nodes[static_cast<std::size_t>(k)]);
      if (!cvrp && state.visited_count == inst.n()) continue;  // nothing left to choose

      Policy::Encoded enc = policy.encode(inst, /*with_grad=*/false);
      const Eigen::VectorXd probs = decode_step(policy, enc, inst, state);
      const std::vector<char> mask = feasibility_mask(inst, state);
      double masked_mass = 0.0;
      for (int v = 0; v < inst.n(); ++v)
        if (!mask[static_cast<std::size_t>(v)]) masked_mass += std::fabs(probs[v]);
      worst_mass = std::max(worst_mass, masked_mass);
      if (std::fabs(probs.sum() - 1.0) > 1e-9) worst_mass = std::max(worst_mass, 1.0);
      ++masked_checked;
    }
  }

  Outcome out;
  out.pass = valid == total && total == 2000 && worst_mass == 0.0 && masked_checked == 100;
  out.detail = format("valid=%d/%d  sampled_steps=%d  masked_mass=%.1e", valid, total,
                      masked_checked, worst_mass);
  return out;
}

// ---------------------------------------------------------------------------
// 3. Exact and heuristic oracles must dominate consistently: no solver result
//    beats the exact optimum, the greedy tour never beats it either, and the
//    2-opt refinement never makes a tour worse.
Outcome criterion_oracle_dominance() {
  Policy policy(tiny_model(ProblemType::Tsp, "none", 0x33u));
  std::uint64_t s = 0x0dceu;
  int checked = 0;
  double worst_violation = 0.0;
  for (int i = 0; i < 200; ++i) {
    s = splitmix64(s);
    const int n = 6 + i % 5;
    const Instance inst = generate_tsp(n, s);
    const double optimum = held_karp_tsp(inst).cost;
    const double solved = solve(policy, inst, /*augment=*/false).cost;
    const Tour nn = nearest_neighbor(inst);
    const double nn_cost = tour_cost(inst, nn);
    const double improved = tour_cost(inst, two_opt(inst, nn));
    worst_violation = std::max(worst_violation, optimum - 1e-9 - solved);
    worst_violation = std::max(worst_violation, optimum - 1e-9 - nn_cost);
    worst_violation = std::max(worst_violation, improved - nn_cost);
    ++checked;
  }
  Outcome out;
  out.pass = checked == 200 && worst_violation <= 0.0;
  out.detail = format("instances=%d  worst_violation=%.2e", checked, worst_violation);
  return out;
}

// ---------------------------------------------------------------------------
// 4. Reverse-mode gradients of the full training objective (teacher-forced
//    trajectory scores -> group deltas -> preference loss), including every
//    fusion parameter, must match central finite differences.
Outcome criterion_gradient_check() {
  ModelConfig cfg = tiny_model(ProblemType::Tsp, "resnet18", 0x44u);
  Policy policy(cfg);
  policy.params().entry("fuse.alpha1").value(0, 0) = 0.3;
  policy.params().entry("fuse.alpha2").value(0, 0) = 0.25;
  policy.params().entry("fuse.beta").value(0, 0) = 1.1;

  const Instance inst = generate_tsp(5, 4404);
  const VisualConstants vis = policy.visual_constants(inst);

  TrajectoryBatch batch;
  {
    Policy::Encoded enc = policy.encode(inst, vis, /*with_grad=*/false);
    batch = rollout_multistart(policy, enc, inst, DecodeMode::Sample, 4405);
  }
  PreferenceGroups groups = select_groups(batch, 2);
  for (double& r : groups.preferred_ref_logps) r -= 0.4;
  for (double& r : groups.nonpreferred_ref_logps) r += 0.3;

  auto loss_and_tape = [&](bool with_grad) {
    Policy::Encoded enc = policy.encode(inst, vis, with_grad);
    const ad::Id dp = group_delta(policy, enc, inst, groups.preferred, groups.preferred_ref_logps);
    const ad::Id dn =
        group_delta(policy, enc, inst, groups.nonpreferred, groups.nonpreferred_ref_logps);
    const ad::Id loss = agpo_loss(*enc.tape, dp, dn, 0.5, 0.1);
    return std::make_pair(enc, loss);
  };

  policy.params().zero_grads();
  {
    auto [enc, loss] = loss_and_tape(true);
    enc.tape->backward(loss);
  }

  const std::vector<std::string> names = {
      "fuse.alpha1", "fuse.alpha2", "fuse.beta",    "fuse.attn.wq", "fuse.attn.wk",
      "fuse.attn.wv", "fuse.attn.wo", "fuse.ff.w1", "fuse.ff.w2",   "vis.proj.w",
      "vis.proj.b",   "vis.pos.w",    "embed.w",    "embed.b",      "enc0.attn.wq",
      "enc0.ff.w1",   "dec.wq",       "dec.wk"};
  const double h = 1e-6;
  double worst_rel = 0.0;
  std::string worst_name = "-";
  int entries = 0;
  for (const std::string& name : names) {
    auto& entry = policy.params().entry(name);
    const std::vector<std::pair<int, int>> probes = {
        {0, 0},
        {static_cast<int>(entry.value.rows()) - 1, static_cast<int>(entry.value.cols()) - 1}};
    for (const auto& [r, c] : probes) {
      const double saved = entry.value(r, c);
      entry.value(r, c) = saved + h;
      auto up_pair = loss_and_tape(false);
      const double up = up_pair.first.tape->value(up_pair.second)(0, 0);
      entry.value(r, c) = saved - h;
      auto down_pair = loss_and_tape(false);
      const double down = down_pair.first.tape->value(down_pair.second)(0, 0);
      entry.value(r, c) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double analytic = entry.grad(r, c);
      const double rel =
          std::fabs(analytic - fd) / std::max({std::fabs(analytic), std::fabs(fd), 1e-6});
      if (rel > worst_rel) {
        worst_rel = rel;
        worst_name = name;
      }
      ++entries;
    }
  }

  Outcome out;
  out.pass = worst_rel < 1e-4;
  out.detail = format("entries=%d  worst_rel=%.2e (%s)", entries, worst_rel, worst_name.c_str());
  return out;
}

// ---------------------------------------------------------------------------
// 5. Structural anchors: zero mixing weights make fusion an identity on the
//    sequential embeddings (bit-exact); the preference loss at zero deltas is
//    ln 2; with equal coefficients and k=1 it matches the pairwise
//    log-sigmoid form.
Outcome criterion_fusion_and_loss_anchors() {
  bool fuse_exact = false;
  {
    ModelConfig cfg = tiny_model(ProblemType::Tsp, "resnet18", 0x55u);
    Policy policy(cfg);  // alpha1 = alpha2 = 0 at initialization
    ad::Tape tape;
    enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
    Rng rng(0x5505u);
    Mat t_in(6, cfg.dim), v_in(6, cfg.dim);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < cfg.dim; ++c) {
        t_in(r, c) = 2.0 * rng.uniform01() - 1.0;
        v_in(r, c) = 2.0 * rng.uniform01() - 1.0;
      }
    const Mat fused = tape.value(enc::fuse(ctx, tape.constant(t_in), tape.constant(v_in)));
    fuse_exact = (fused.array() == t_in.array()).all();
  }

  const double ln2_err = std::fabs(agpo_loss(0.0, 0.0, 0.5, 0.1) - 0.69314718055994530942);

  // Pairwise reduction on real trajectories with beta_w = beta_l, k = 1.
  double dpo_err = 0.0;
  {
    Policy policy(tiny_model(ProblemType::Tsp, "none", 0x56u));
    const Instance inst = generate_tsp(6, 5606);
    TrajectoryBatch batch = rollout_multistart(policy, inst, DecodeMode::Sample, 5607);
    PreferenceGroups groups = select_groups(batch, 1);
    for (double& r : groups.preferred_ref_logps) r -= 0.7;
    for (double& r : groups.nonpreferred_ref_logps) r += 0.45;

    Policy::Encoded enc = policy.encode(inst, /*with_grad=*/false);
    const double dp =
        enc.tape->value(group_delta(policy, enc, inst, groups.preferred,
                                    groups.preferred_ref_logps))(0, 0);
    const double dn =
        enc.tape->value(group_delta(policy, enc, inst, groups.nonpreferred,
                                    groups.nonpreferred_ref_logps))(0, 0);
    const double beta = 0.35;
    const double loss = agpo_loss(dp, dn, beta, beta);
    const double x = beta * (dp - dn);  // pairwise form: -log(sigmoid(x))
    const double pairwise = x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
    dpo_err = std::fabs(loss - pairwise);
  }

  Outcome out;
  out.pass = fuse_exact && ln2_err < 1e-12 && dpo_err < 1e-9;
  out.detail = format("fuse_identity=%s  ln2_err=%.1e  pairwise_err=%.1e",
                      fuse_exact ? "bit-exact" : "MISMATCH", ln2_err, dpo_err);
  return out;
}

// ---------------------------------------------------------------------------
// 6. Desk-scale learning: the small preset on TSP-20 with a 2,000-instance
//    pool must push the mean greedy gap on a held-out set below 10% within
//    30 minutes on one CPU.
Outcome criterion_desk_scale_learning() {
  RunConfig cfg;
  cfg.problem = "tsp";
  cfg.n = 20;
  cfg.preset = "small";
  cfg.model = ModelConfig::preset("small");
  cfg.model.backbone = "resnet18";
  cfg.seed = 6;
  cfg.pool_size = 2000;
  cfg.val_instances = 16;
  cfg.val_n = 12;
  cfg.eval_interval = 5;
  cfg.target_val_gap = 0.0995;
  cfg.max_wall_time_s = 1700.0;
  cfg.agpo.outer_steps = 400;  // wall-clock and target bounds stop earlier
  TrainOptions opts = cfg.train_options();

  const double t0 = now_seconds();
  Policy policy(opts.model);
  const TrainResult result = train_agpo(policy, opts);
  const double elapsed = now_seconds() - t0;

  double best_gap = std::numeric_limits<double>::infinity();
  for (const MetricsRow& row : result.metrics)
    if (row.val_gap.has_value()) best_gap = std::min(best_gap, *row.val_gap);

  Outcome out;
  out.pass = best_gap < 0.10 && elapsed < 1800.0;
  out.detail = format("best_val_gap=%.4f  grad_steps=%lld  train_s=%.0f", best_gap,
                      result.grad_steps, elapsed);
  return out;
}

// ---------------------------------------------------------------------------
// 7. Convergence speed: across 5 seeds, preference-group training must reach
//    the validation gap that the policy-gradient baseline attains after
//    1,000 gradient steps, using strictly fewer gradient steps (median).
Outcome criterion_convergence_speed() {
  std::vector<long long> steps_to_target;
  std::string per_seed;
  for (std::uint64_t seed = 71; seed <= 75; ++seed) {
    RunConfig base;
    base.problem = "tsp";
    base.n = 10;
    base.preset = "tiny";
    base.model = ModelConfig::preset("tiny");
    base.model.backbone = "none";
    base.seed = seed;
    base.pool_size = 500;
    base.val_instances = 12;
    base.val_n = 10;
    base.agpo.batch_size = 16;
    base.agpo.outer_steps = 1000;

    RunConfig ref_cfg = base;
    ref_cfg.eval_interval = 1000;
    TrainOptions ref_opts = ref_cfg.train_options();
    Policy ref_policy(ref_opts.model);
    const TrainResult ref_run = train_reinforce(ref_policy, ref_opts);
    double threshold = std::numeric_limits<double>::quiet_NaN();
    for (auto it = ref_run.metrics.rbegin(); it != ref_run.metrics.rend(); ++it)
      if (it->val_gap.has_value()) {
        threshold = *it->val_gap;
        break;
      }

    RunConfig pref_cfg = base;
    pref_cfg.eval_interval = 1;
    pref_cfg.target_val_gap = threshold;
    pref_cfg.agpo.inner_iters = 1;
    pref_cfg.agpo.top_k = 2;
    TrainOptions pref_opts = pref_cfg.train_options();
    Policy pref_policy(pref_opts.model);
    const TrainResult pref_run = train_agpo(pref_policy, pref_opts);

    long long reached = 1000000;  // sentinel: never reached the target
    for (const MetricsRow& row : pref_run.metrics)
      if (row.val_gap.has_value() && *row.val_gap <= threshold) {
        reached = row.grad_steps;
        break;
      }
    steps_to_target.push_back(reached);
    per_seed += format("%s%llu:%lld", per_seed.empty() ? "" : ",",
                       static_cast<unsigned long long>(seed), reached);
  }

  std::vector<long long> sorted = steps_to_target;
  std::sort(sorted.begin(), sorted.end());
  const long long median = sorted[sorted.size() / 2];
  const long long baseline_budget = 1000;

  Outcome out;
  out.pass = median < baseline_budget;
  out.detail =
      format("median_steps=%lld vs baseline=%lld  per-seed=[%s]", median, baseline_budget,
             per_seed.c_str());
  return out;
}

// ---------------------------------------------------------------------------
// 8. Test-time augmentation: over 500 instances the 8-variant decode never
//    costs more than the plain decode, and its result is invariant to
//    symmetric re-descriptions of the input.
Outcome criterion_augmentation_consistency() {
  Policy tsp_policy(tiny_model(ProblemType::Tsp, "none", 0x88u));
  Policy cvrp_policy(tiny_model(ProblemType::Cvrp, "none", 0x89u));

  std::uint64_t s = 0xa115ull;
  int checked = 0;
  double worst_regression = -std::numeric_limits<double>::infinity();
  double worst_variant_dev = 0.0;
  for (int i = 0; i < 500; ++i) {
    s = splitmix64(s);
    const bool cvrp = i >= 250;
    Instance inst = cvrp ? generate_cvrp(8, 0, s) : generate_tsp(12, s);
    Policy& policy = cvrp ? cvrp_policy : tsp_policy;

    const double plain = solve(policy, inst, /*augment=*/false).cost;
    const double augmented = solve(policy, inst, /*augment=*/true).cost;
    worst_regression = std::max(worst_regression, augmented - plain);

    const std::array<Instance, 8> variants = augment_x8(inst);
    for (const Instance& variant : variants) {
      const double vcost = solve(policy, variant, /*augment=*/true).cost;
      worst_variant_dev = std::max(worst_variant_dev, std::fabs(vcost - augmented));
    }
    ++checked;
  }

  Outcome out;
  out.pass = checked == 500 && worst_regression <= 0.0 && worst_variant_dev <= 1e-9;
  out.detail = format("instances=%d  worst_cost_regression=%.2e  worst_variant_dev=%.2e",
                      checked, worst_regression, worst_variant_dev);
  return out;
}

// ---------------------------------------------------------------------------
// 9. Raster golden: a hand-built 3-node capacitated instance must produce the
//    exact per-channel pixel patterns at the computed indices and zeros
//    everywhere else, bit-exact.
Outcome criterion_raster_golden() {
  Instance inst;
  inst.type = ProblemType::Cvrp;
  inst.coords = {{0.5, 0.5}, {0.1, 0.8}, {0.9, 0.2}};
  inst.demands = {0, 6, 9};
  inst.capacity = 30;
  const RasterImage img = rasterize(inst);

  struct GoldenPixel {
    int row, col;
    float r, g, b;
  };
  const std::vector<GoldenPixel> golden = {
      {112, 112, 1.0f, 1.0f, 0.0f},                                   // depot
      {179, 22, 1.0f, 0.0f, static_cast<float>(6.0 / 30.0)},          // customer 1
      {44, 201, 1.0f, 0.0f, static_cast<float>(9.0 / 30.0)},          // customer 2
  };

  bool nodes_exact = true;
  for (const GoldenPixel& p : golden) {
    nodes_exact = nodes_exact && img.at(p.row, p.col, 0) == p.r && img.at(p.row, p.col, 1) == p.g &&
                  img.at(p.row, p.col, 2) == p.b;
  }
  int nonzero_background = 0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const bool is_node = (r == 112 && c == 112) || (r == 179 && c == 22) || (r == 44 && c == 201);
      if (is_node) continue;
      if (img.at(r, c, 0) != 0.0f || img.at(r, c, 1) != 0.0f || img.at(r, c, 2) != 0.0f)
        ++nonzero_background;
    }

  Outcome out;
  out.pass = nodes_exact && nonzero_background == 0;
  out.detail = format("node_pixels=%s  nonzero_background=%d",
                      nodes_exact ? "bit-exact" : "MISMATCH", nonzero_background);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  struct Entry {
    int number;
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Entry> entries = {
      {1, "collision-probability formula", criterion_collision_probability},
      {2, "rollout feasibility and masking", criterion_rollout_feasibility},
      {3, "oracle dominance", criterion_oracle_dominance},
      {4, "training-objective gradients", criterion_gradient_check},
      {5, "fusion and loss anchors", criterion_fusion_and_loss_anchors},
      {6, "desk-scale learning", criterion_desk_scale_learning},
      {7, "convergence speed vs baseline", criterion_convergence_speed},
      {8, "augmentation consistency", criterion_augmentation_consistency},
      {9, "raster golden pixels", criterion_raster_golden},
  };

  int failures = 0;
  for (const Entry& entry : entries) {
    if (!selected.empty() && selected.count(entry.number) == 0) continue;
    Outcome outcome;
    const double t0 = now_seconds();
    try {
      outcome = entry.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double elapsed = now_seconds() - t0;
    std::printf("criterion %d  %-34s  %s  %8.1fs  %s\n", entry.number, entry.name,
                outcome.pass ? "PASS" : "FAIL", elapsed, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  if (failures == 0) {
    std::printf("acceptance: all selected criteria passed\n");
  } else {
    std::printf("acceptance: %d criterion(s) failed\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
