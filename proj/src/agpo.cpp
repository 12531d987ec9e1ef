#include "vagpo/agpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vagpo/oracles.hpp"

namespace vagpo {

nlohmann::json AgpoConfig::to_json() const {
  return {{"beta_w", beta_w},
          {"beta_l", beta_l},
          {"top_k", top_k},
          {"inner_iters", inner_iters},
          {"outer_steps", outer_steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"ref_refresh_interval", ref_refresh_interval},
          {"rescore_stored", rescore_stored},
          {"ref_sampling", ref_sampling}};
}

AgpoConfig AgpoConfig::from_json(const nlohmann::json& j) {
  AgpoConfig cfg;
  cfg.beta_w = j.value("beta_w", cfg.beta_w);
  cfg.beta_l = j.value("beta_l", cfg.beta_l);
  cfg.top_k = j.value("top_k", cfg.top_k);
  cfg.inner_iters = j.value("inner_iters", cfg.inner_iters);
  cfg.outer_steps = j.value("outer_steps", cfg.outer_steps);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.ref_refresh_interval = j.value("ref_refresh_interval", cfg.ref_refresh_interval);
  cfg.rescore_stored = j.value("rescore_stored", cfg.rescore_stored);
  cfg.ref_sampling = j.value("ref_sampling", cfg.ref_sampling);
  return cfg;
}

nlohmann::json MetricsRow::to_json() const {
  nlohmann::json j = {{"step", step},
                      {"grad_steps", grad_steps},
                      {"loss", loss},
                      {"mean_reward", mean_reward},
                      {"wall_time_s", wall_time_s}};
  if (val_gap.has_value()) j["val_gap"] = *val_gap;
  return j;
}

MetricsRow MetricsRow::from_json(const nlohmann::json& j) {
  MetricsRow row;
  row.step = j.at("step").get<long long>();
  row.grad_steps = j.value("grad_steps", 0LL);
  row.loss = j.at("loss").get<double>();
  row.mean_reward = j.value("mean_reward", 0.0);
  if (j.contains("val_gap") && !j["val_gap"].is_null()) row.val_gap = j["val_gap"].get<double>();
  row.wall_time_s = j.value("wall_time_s", 0.0);
  return row;
}

PreferenceGroups select_groups(const TrajectoryBatch& batch, int k) {
  const int n = static_cast<int>(batch.trajectories.size());
  if (n < 2) throw std::invalid_argument("preference grouping needs at least two trajectories");
  k = std::clamp(k, 1, n / 2);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Trajectory& ta = batch.trajectories[static_cast<std::size_t>(a)];
    const Trajectory& tb = batch.trajectories[static_cast<std::size_t>(b)];
    if (ta.reward != tb.reward) return ta.reward > tb.reward;
    return ta.start < tb.start;
  });

  PreferenceGroups groups;
  for (int i = 0; i < k; ++i) {
    const Trajectory& t = batch.trajectories[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    groups.preferred.push_back(t);
    groups.preferred_ref_logps.push_back(t.total_logp);
  }
  for (int i = 0; i < k; ++i) {  // worst first
    const Trajectory& t =
        batch.trajectories[static_cast<std::size_t>(order[static_cast<std::size_t>(n - 1 - i)])];
    groups.nonpreferred.push_back(t);
    groups.nonpreferred_ref_logps.push_back(t.total_logp);
  }
  return groups;
}

ad::Id group_delta(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                   const std::vector<Trajectory>& group, const std::vector<double>& ref_logps) {
  if (group.empty()) throw std::invalid_argument("empty trajectory group");
  if (group.size() != ref_logps.size())
    throw std::invalid_argument("group and reference log-prob sizes differ");
  const ad::Id logps = score_trajectories(policy, enc, inst, group);
  const double ref_sum = std::accumulate(ref_logps.begin(), ref_logps.end(), 0.0);
  ad::Tape& tape = *enc.tape;
  return tape.sub(tape.sum_all(logps), tape.constant(Mat::Constant(1, 1, ref_sum)));
}

double agpo_loss(double delta_pref, double delta_nonpref, double beta_w, double beta_l) {
  const double x = -(beta_w * delta_pref - beta_l * delta_nonpref);
  // softplus in its overflow-free split form
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

ad::Id agpo_loss(ad::Tape& tape, ad::Id delta_pref, ad::Id delta_nonpref, double beta_w,
                 double beta_l) {
  const ad::Id margin = tape.sub(tape.scale(delta_pref, beta_w), tape.scale(delta_nonpref, beta_l));
  return tape.softplus(tape.scale(margin, -1.0));
}

namespace {

struct Harness {
  std::vector<Instance> pool;
  std::vector<VisualConstants> pool_vis;
  std::vector<char> pool_vis_ready;
  std::vector<Instance> val;
  std::vector<VisualConstants> val_vis;
  std::vector<double> val_oracle;
  bool has_val = false;
};

Instance make_instance(const TrainOptions& opts, std::uint64_t seed) {
  if (opts.problem == ProblemType::Cvrp) return generate_cvrp(opts.n, opts.cvrp_capacity, seed);
  return generate_tsp(opts.n, seed);
}

Harness build_harness(Policy& policy, const TrainOptions& opts) {
  Harness h;
  std::uint64_t s_pool = opts.data_seed;
  h.pool.reserve(static_cast<std::size_t>(opts.pool_size));
  for (int i = 0; i < opts.pool_size; ++i) {
    s_pool = splitmix64(s_pool);
    h.pool.push_back(make_instance(opts, s_pool));
  }
  h.pool_vis.resize(h.pool.size());
  h.pool_vis_ready.assign(h.pool.size(), 0);

  const int val_n = opts.val_n > 0 ? opts.val_n : opts.n;
  const bool oracle_ok = (opts.problem == ProblemType::Tsp && val_n <= 16) ||
                         (opts.problem == ProblemType::Cvrp && val_n <= 8);
  if (opts.val_instances > 0 && oracle_ok) {
    std::uint64_t s_val = opts.data_seed ^ 0x94d049bb133111ebULL;
    for (int i = 0; i < opts.val_instances; ++i) {
      s_val = splitmix64(s_val);
      Instance inst = (opts.problem == ProblemType::Cvrp)
                          ? generate_cvrp(val_n, opts.cvrp_capacity, s_val)
                          : generate_tsp(val_n, s_val);
      double oracle_cost = 0.0;
      if (opts.problem == ProblemType::Tsp) {
        oracle_cost = held_karp_tsp(inst).cost;
      } else {
        oracle_cost = brute_force_cvrp(inst).cost;
      }
      h.val_oracle.push_back(oracle_cost);
      h.val_vis.push_back(policy.visual_constants(inst));
      h.val.push_back(std::move(inst));
    }
    h.has_val = true;
  }
  return h;
}

const VisualConstants& pool_visual(Policy& policy, Harness& h, int idx) {
  if (!h.pool_vis_ready[static_cast<std::size_t>(idx)]) {
    h.pool_vis[static_cast<std::size_t>(idx)] =
        policy.visual_constants(h.pool[static_cast<std::size_t>(idx)]);
    h.pool_vis_ready[static_cast<std::size_t>(idx)] = 1;
  }
  return h.pool_vis[static_cast<std::size_t>(idx)];
}

double validation_gap(Policy& policy, const Harness& h) {
  double total = 0.0;
  for (std::size_t i = 0; i < h.val.size(); ++i) {
    Policy::Encoded enc = policy.encode(h.val[i], h.val_vis[i], /*with_grad=*/false);
    TrajectoryBatch batch =
        rollout_multistart(policy, enc, h.val[i], DecodeMode::Greedy, /*seed=*/0);
    double best = std::numeric_limits<double>::infinity();
    for (const Trajectory& t : batch.trajectories) best = std::min(best, t.cost);
    total += gap(best, h.val_oracle[i]);
  }
  return total / static_cast<double>(h.val.size());
}

void emit_row(const TrainOptions& opts, TrainResult& result, std::ofstream* metrics_out,
              const MetricsRow& row) {
  result.metrics.push_back(row);
  if (metrics_out != nullptr && metrics_out->is_open()) {
    (*metrics_out) << row.to_json().dump() << "\n";
    metrics_out->flush();
  }
  if (opts.on_step) opts.on_step(row);
}

void save_diagnostic(Policy& policy, const TrainOptions& opts, long long grad_steps) {
  const std::string path =
      (opts.checkpoint_path.empty() ? std::string("vagpo") : opts.checkpoint_path) + ".diverged";
  try {
    policy.save(path, grad_steps, nullptr);
    std::fprintf(stderr, "[vagpo] training diverged; diagnostic checkpoint at %s\n", path.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[vagpo] training diverged; checkpoint write failed: %s\n", e.what());
  }
}

bool rewards_all_equal(const TrajectoryBatch& batch) {
  for (std::size_t i = 1; i < batch.trajectories.size(); ++i)
    if (batch.trajectories[i].reward != batch.trajectories[0].reward) return false;
  return true;
}

double mean_reward_of(const TrajectoryBatch& batch) {
  double sum = 0.0;
  for (const Trajectory& t : batch.trajectories) sum += t.reward;
  return sum / static_cast<double>(batch.trajectories.size());
}

}  // namespace

TrainResult train_agpo(Policy& policy, const TrainOptions& opts) {
  const AgpoConfig& cfg = opts.agpo;
  if (cfg.beta_w <= cfg.beta_l || cfg.beta_l <= 0.0)
    std::fprintf(stderr,
                 "[vagpo] warning: asymmetry expects beta_w > beta_l > 0 (got %.4g, %.4g)\n",
                 cfg.beta_w, cfg.beta_l);

  Harness h = build_harness(policy, opts);
  Policy ref_policy(policy.config());

  AdamOptimizer adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  TrainResult result;
  std::ofstream metrics_out;
  if (!opts.metrics_path.empty()) {
    metrics_out.open(opts.metrics_path);
    if (!metrics_out) throw std::runtime_error("cannot open metrics path: " + opts.metrics_path);
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  Rng train_rng(opts.train_seed);
  bool stop = false;

  for (int step = 1; step <= cfg.outer_steps && !stop; ++step) {
    if (opts.max_wall_time_s > 0.0 && elapsed() > opts.max_wall_time_s) break;
    // Reference snapshot: copy current parameters into the frozen twin.
    if ((step - 1) % std::max(1, cfg.ref_refresh_interval) == 0) {
      for (std::size_t i = 0; i < policy.params().entries().size(); ++i)
        ref_policy.params().entries()[i].value = policy.params().entries()[i].value;
    }

    Rng step_rng = train_rng.derive(static_cast<std::uint64_t>(step));
    std::vector<int> batch_idx(static_cast<std::size_t>(cfg.batch_size));
    for (auto& idx : batch_idx) idx = step_rng.uniform_int(0, opts.pool_size - 1);
    std::vector<std::uint64_t> rollout_seeds(batch_idx.size());
    for (auto& s : rollout_seeds) s = step_rng.next_u64();

    // Collect reference rollouts and groups under the reference policy.
    struct Kept {
      int pool_idx;
      PreferenceGroups groups;
    };
    std::vector<Kept> kept;
    double reward_sum = 0.0;
    for (std::size_t b = 0; b < batch_idx.size(); ++b) {
      const int idx = batch_idx[b];
      const Instance& inst = h.pool[static_cast<std::size_t>(idx)];
      const VisualConstants& vis = pool_visual(policy, h, idx);
      Policy::Encoded enc = ref_policy.encode(inst, vis, /*with_grad=*/false);
      const DecodeMode ref_mode = cfg.ref_sampling ? DecodeMode::Sample : DecodeMode::Greedy;
      TrajectoryBatch batch =
          rollout_multistart(ref_policy, enc, inst, ref_mode, rollout_seeds[b]);
      reward_sum += mean_reward_of(batch);
      if (rewards_all_equal(batch)) continue;  // no preference signal
      kept.push_back({idx, select_groups(batch, cfg.top_k)});
    }

    double loss_sum = 0.0;
    int loss_count = 0;
    if (!kept.empty()) {
      for (int inner = 0; inner < cfg.inner_iters; ++inner) {
        policy.params().zero_grads();
        double iter_loss = 0.0;
        for (std::size_t kidx = 0; kidx < kept.size(); ++kidx) {
          Kept& item = kept[kidx];
          const Instance& inst = h.pool[static_cast<std::size_t>(item.pool_idx)];
          const VisualConstants& vis = pool_visual(policy, h, item.pool_idx);
          if (!cfg.rescore_stored) {
            // Alternative reading: fresh trajectories each inner iteration,
            // reference log-probs re-scored under the frozen twin.
            Rng inner_rng = step_rng.derive(static_cast<std::uint64_t>(
                1000 + inner * static_cast<int>(kept.size()) + static_cast<int>(kidx)));
            Policy::Encoded roll_enc = policy.encode(inst, vis, /*with_grad=*/false);
            TrajectoryBatch fresh =
                rollout_multistart(policy, roll_enc, inst, DecodeMode::Sample, inner_rng.next_u64());
            if (rewards_all_equal(fresh)) continue;
            PreferenceGroups groups = select_groups(fresh, cfg.top_k);
            Policy::Encoded ref_enc = ref_policy.encode(inst, vis, /*with_grad=*/false);
            const ad::Id pref_ref =
                score_trajectories(ref_policy, ref_enc, inst, groups.preferred);
            const ad::Id nonpref_ref =
                score_trajectories(ref_policy, ref_enc, inst, groups.nonpreferred);
            for (std::size_t i = 0; i < groups.preferred.size(); ++i)
              groups.preferred_ref_logps[i] = ref_enc.tape->value(pref_ref)(static_cast<int>(i), 0);
            for (std::size_t i = 0; i < groups.nonpreferred.size(); ++i)
              groups.nonpreferred_ref_logps[i] =
                  ref_enc.tape->value(nonpref_ref)(static_cast<int>(i), 0);
            item.groups = std::move(groups);
          }
          Policy::Encoded enc = policy.encode(inst, vis, /*with_grad=*/true);
          const ad::Id dp =
              group_delta(policy, enc, inst, item.groups.preferred, item.groups.preferred_ref_logps);
          const ad::Id dn = group_delta(policy, enc, inst, item.groups.nonpreferred,
                                        item.groups.nonpreferred_ref_logps);
          const ad::Id loss = agpo_loss(*enc.tape, dp, dn, cfg.beta_w, cfg.beta_l);
          const double loss_value = enc.tape->value(loss)(0, 0);
          iter_loss += loss_value;
          enc.tape->backward(enc.tape->scale(loss, 1.0 / static_cast<double>(kept.size())));
        }
        iter_loss /= static_cast<double>(kept.size());
        if (!std::isfinite(iter_loss)) {
          save_diagnostic(policy, opts, result.grad_steps);
          result.diverged = true;
          throw TrainingDiverged("loss became non-finite at outer step " + std::to_string(step));
        }
        adam.step(policy.params());
        result.grad_steps += 1;
        loss_sum += iter_loss;
        loss_count += 1;
        if (opts.max_grad_steps > 0 && result.grad_steps >= opts.max_grad_steps) {
          stop = true;
          break;
        }
      }
    }

    MetricsRow row;
    row.step = step;
    row.grad_steps = result.grad_steps;
    row.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.mean_reward = reward_sum / static_cast<double>(cfg.batch_size);
    const bool do_val = h.has_val && opts.eval_interval > 0 &&
                        (step % opts.eval_interval == 0 || step == cfg.outer_steps || stop);
    if (do_val) {
      row.val_gap = validation_gap(policy, h);
      if (opts.target_val_gap >= 0.0 && *row.val_gap <= opts.target_val_gap) stop = true;
    }
    row.wall_time_s = elapsed();
    emit_row(opts, result, &metrics_out, row);
  }

  if (!opts.checkpoint_path.empty()) {
    const nlohmann::json extra = {{"agpo", opts.agpo.to_json()}};
    policy.save(opts.checkpoint_path, result.grad_steps, &adam, &extra);
  }
  return result;
}

TrainResult train_reinforce(Policy& policy, const TrainOptions& opts) {
  const AgpoConfig& cfg = opts.agpo;
  Harness h = build_harness(policy, opts);

  AdamOptimizer adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  TrainResult result;
  std::ofstream metrics_out;
  if (!opts.metrics_path.empty()) {
    metrics_out.open(opts.metrics_path);
    if (!metrics_out) throw std::runtime_error("cannot open metrics path: " + opts.metrics_path);
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  Rng train_rng(opts.train_seed);
  bool stop = false;

  for (int step = 1; step <= cfg.outer_steps && !stop; ++step) {
    if (opts.max_wall_time_s > 0.0 && elapsed() > opts.max_wall_time_s) break;
    Rng step_rng = train_rng.derive(static_cast<std::uint64_t>(step));
    std::vector<int> batch_idx(static_cast<std::size_t>(cfg.batch_size));
    for (auto& idx : batch_idx) idx = step_rng.uniform_int(0, opts.pool_size - 1);
    std::vector<std::uint64_t> rollout_seeds(batch_idx.size());
    for (auto& s : rollout_seeds) s = step_rng.next_u64();

    policy.params().zero_grads();
    double loss_sum = 0.0;
    double reward_sum = 0.0;
    int used = 0;
    for (std::size_t b = 0; b < batch_idx.size(); ++b) {
      const int idx = batch_idx[b];
      const Instance& inst = h.pool[static_cast<std::size_t>(idx)];
      const VisualConstants& vis = pool_visual(policy, h, idx);
      Policy::Encoded enc = policy.encode(inst, vis, /*with_grad=*/true);
      TrajectoryBatch batch =
          rollout_multistart(policy, enc, inst, DecodeMode::Sample, rollout_seeds[b]);
      reward_sum += mean_reward_of(batch);
      const int starts = static_cast<int>(batch.trajectories.size());
      double mean_r = 0.0;
      for (const Trajectory& t : batch.trajectories) mean_r += t.reward;
      mean_r /= starts;
      Mat weights(starts, 1);
      for (int r = 0; r < starts; ++r)
        weights(r, 0) = -(batch.trajectories[static_cast<std::size_t>(r)].reward - mean_r) /
                        static_cast<double>(starts);
      const ad::Id logps = score_trajectories(policy, enc, inst, batch.trajectories);
      const ad::Id loss = enc.tape->dot_const(logps, weights);
      loss_sum += enc.tape->value(loss)(0, 0);
      used += 1;
      enc.tape->backward(enc.tape->scale(loss, 1.0 / static_cast<double>(cfg.batch_size)));
    }
    const double step_loss = used > 0 ? loss_sum / used : 0.0;
    if (!std::isfinite(step_loss)) {
      save_diagnostic(policy, opts, result.grad_steps);
      result.diverged = true;
      throw TrainingDiverged("loss became non-finite at outer step " + std::to_string(step));
    }
    adam.step(policy.params());
    result.grad_steps += 1;
    if (opts.max_grad_steps > 0 && result.grad_steps >= opts.max_grad_steps) stop = true;

    MetricsRow row;
    row.step = step;
    row.grad_steps = result.grad_steps;
    row.loss = step_loss;
    row.mean_reward = reward_sum / static_cast<double>(cfg.batch_size);
    const bool do_val = h.has_val && opts.eval_interval > 0 &&
                        (step % opts.eval_interval == 0 || step == cfg.outer_steps || stop);
    if (do_val) {
      row.val_gap = validation_gap(policy, h);
      if (opts.target_val_gap >= 0.0 && *row.val_gap <= opts.target_val_gap) stop = true;
    }
    row.wall_time_s = elapsed();
    emit_row(opts, result, &metrics_out, row);
  }

  if (!opts.checkpoint_path.empty()) {
    const nlohmann::json extra = {{"agpo", opts.agpo.to_json()}};
    policy.save(opts.checkpoint_path, result.grad_steps, &adam, &extra);
  }
  return result;
}

}  // namespace vagpo
