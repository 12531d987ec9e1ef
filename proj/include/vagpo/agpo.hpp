#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vagpo/decoder.hpp"
#include "vagpo/encoder.hpp"

namespace vagpo {

struct AgpoConfig {
  double beta_w = 0.5;  // preferred-group coefficient
  double beta_l = 0.1;  // non-preferred-group coefficient
  int top_k = 10;       // group size before the floor(N/2) clamp
  int inner_iters = 3;  // gradient iterations per collected batch (K)
  int outer_steps = 100;
  int batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  int ref_refresh_interval = 1;  // outer steps between reference snapshots
  bool rescore_stored = true;    // false: resample trajectories each inner iteration
  bool ref_sampling = true;      // false: deterministic greedy reference rollouts

  nlohmann::json to_json() const;
  static AgpoConfig from_json(const nlohmann::json& j);
};

struct PreferenceGroups {
  std::vector<Trajectory> preferred;     // top-k by reward, best first
  std::vector<Trajectory> nonpreferred;  // bottom-k by reward, worst last
  std::vector<double> preferred_ref_logps;
  std::vector<double> nonpreferred_ref_logps;
};

// Descending reward sort (stable tie-break on start index); top-k and
// bottom-k with k clamped to floor(N/2). Reference log-probs are snapshotted
// from the rollout records.
PreferenceGroups select_groups(const TrajectoryBatch& batch, int k);

// Differentiable sum of [log pi_theta(tau) - ref] over one group.
ad::Id group_delta(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                   const std::vector<Trajectory>& group, const std::vector<double>& ref_logps);

// softplus(-(beta_w * delta_pref - beta_l * delta_nonpref)).
double agpo_loss(double delta_pref, double delta_nonpref, double beta_w, double beta_l);
ad::Id agpo_loss(ad::Tape& tape, ad::Id delta_pref, ad::Id delta_nonpref, double beta_w,
                 double beta_l);

struct MetricsRow {
  long long step = 0;        // outer step, 1-based
  long long grad_steps = 0;  // cumulative gradient updates
  double loss = 0.0;
  double mean_reward = 0.0;
  std::optional<double> val_gap;
  double wall_time_s = 0.0;

  nlohmann::json to_json() const;
  static MetricsRow from_json(const nlohmann::json& j);
};

struct TrainOptions {
  ProblemType problem = ProblemType::Tsp;
  int n = 10;              // TSP node count / CVRP customer count
  int cvrp_capacity = 0;   // 0 = size default
  ModelConfig model;
  AgpoConfig agpo;

  std::uint64_t data_seed = 7;
  std::uint64_t train_seed = 11;
  int pool_size = 512;  // training instance pool; sampled with replacement

  int val_instances = 16;  // fixed held-out set, gap measured against an exact oracle
  int val_n = 0;           // validation size (0 = same as n); must stay oracle-tractable
  int eval_interval = 10;  // outer steps between validation passes (0 = never)

  std::string metrics_path;     // JSONL, one row per outer step ("" = keep in memory only)
  std::string checkpoint_path;  // final checkpoint ("" = skip)

  double max_wall_time_s = 0.0;   // stop early when exceeded (0 = unlimited)
  double target_val_gap = -1.0;   // stop early once reached (<0 = disabled)
  long long max_grad_steps = 0;   // stop early when reached (0 = unlimited)

  std::function<void(const MetricsRow&)> on_step;  // optional observer
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  long long grad_steps = 0;
  bool diverged = false;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

// Preference-group training: per outer step, sample a batch, roll out with
// sampling under the current policy, snapshot reference log-probs, then run K
// gradient iterations re-scoring the stored groups under the evolving policy.
TrainResult train_agpo(Policy& policy, const TrainOptions& opts);

// Policy-gradient baseline on the identical harness: advantage = reward minus
// the mean reward over the instance's starts, one gradient step per batch.
TrainResult train_reinforce(Policy& policy, const TrainOptions& opts);

}  // namespace vagpo
