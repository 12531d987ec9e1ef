#include "vagpo/decoder.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vagpo/common.hpp"

namespace vagpo {

bool DecodeState::done(const Instance& inst) const {
  if (inst.is_cvrp()) return visited_count == inst.num_customers() && current == inst.depot;
  return visited_count == inst.n();
}

DecodeState initial_state(const Instance& inst) {
  DecodeState s;
  s.visited.assign(static_cast<std::size_t>(inst.n()), 0);
  if (inst.is_cvrp()) {
    s.current = inst.depot;
    s.capacity = inst.capacity;
    s.remaining_units = inst.capacity;
  }
  return s;
}

void advance_state(const Instance& inst, DecodeState& state, int node) {
  if (node < 0 || node >= inst.n()) throw std::invalid_argument("node index out of range");
  if (inst.is_cvrp()) {
    if (node == inst.depot) {
      state.remaining_units = inst.capacity;
    } else {
      if (state.visited[static_cast<std::size_t>(node)])
        throw std::invalid_argument("customer already visited");
      if (inst.demands[static_cast<std::size_t>(node)] > state.remaining_units)
        throw std::invalid_argument("customer demand exceeds remaining capacity");
      state.visited[static_cast<std::size_t>(node)] = 1;
      state.remaining_units -= inst.demands[static_cast<std::size_t>(node)];
      state.visited_count += 1;
      if (state.first < 0) state.first = node;
    }
  } else {
    if (state.visited[static_cast<std::size_t>(node)])
      throw std::invalid_argument("node already visited");
    state.visited[static_cast<std::size_t>(node)] = 1;
    state.visited_count += 1;
    if (state.first < 0) state.first = node;
  }
  state.current = node;
  state.step += 1;
}

std::vector<char> feasibility_mask(const Instance& inst, const DecodeState& state) {
  const int n = inst.n();
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  if (!inst.is_cvrp()) {
    for (int j = 0; j < n; ++j) mask[static_cast<std::size_t>(j)] = state.visited[j] ? 0 : 1;
    return mask;
  }
  bool any_customer = false;
  for (int j = 0; j < n; ++j) {
    if (j == inst.depot) continue;
    if (state.visited[static_cast<std::size_t>(j)]) continue;
    if (inst.demands[static_cast<std::size_t>(j)] > state.remaining_units) continue;
    mask[static_cast<std::size_t>(j)] = 1;
    any_customer = true;
  }
  // The depot is always reachable except as a self-loop skipping feasible
  // work; a finished trajectory keeps it available so lockstep batches can
  // pad with zero-probability-mass depot stays.
  const bool at_depot = state.current == inst.depot;
  mask[static_cast<std::size_t>(inst.depot)] = (at_depot && any_customer) ? 0 : 1;
  return mask;
}

namespace {

// Picks the next node for one row given the step's log-probabilities.
using Chooser =
    std::function<int(int row, const Mat& logp, const std::vector<char>& mask, bool row_done)>;

struct LockstepResult {
  ad::Id total_logp = -1;  // R x 1
  std::vector<Trajectory> trajectories;
};

LockstepResult decode_lockstep(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                               const std::vector<int>& starts, const Chooser& choose) {
  const int n = inst.n();
  const int r_count = static_cast<int>(starts.size());
  if (r_count == 0) throw std::invalid_argument("no start nodes");
  ad::Tape& tape = *enc.tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), enc.with_grad, {}};

  std::vector<DecodeState> states;
  states.reserve(static_cast<std::size_t>(r_count));
  LockstepResult result;
  result.trajectories.resize(static_cast<std::size_t>(r_count));
  for (int r = 0; r < r_count; ++r) {
    DecodeState s = initial_state(inst);
    Trajectory& traj = result.trajectories[static_cast<std::size_t>(r)];
    traj.start = starts[static_cast<std::size_t>(r)];
    if (inst.is_cvrp()) {
      if (traj.start == inst.depot) throw std::invalid_argument("depot cannot be a forced start");
      traj.nodes.push_back(inst.depot);
    }
    advance_state(inst, s, traj.start);
    traj.nodes.push_back(traj.start);
    states.push_back(std::move(s));
  }

  const ad::Id mean_id = tape.mean_rows(enc.fused);
  const ad::Id keys = tape.matmul(enc.fused, ctx.param("dec.wk"));
  ad::Id total = tape.constant(Mat::Zero(r_count, 1));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(policy.config().dim));

  auto all_done = [&]() {
    for (const auto& s : states)
      if (!s.done(inst)) return false;
    return true;
  };

  int guard = 0;
  while (!all_done()) {
    if (++guard > 4 * n + 8) throw std::logic_error("decode loop failed to terminate");
    std::vector<int> firsts(static_cast<std::size_t>(r_count));
    std::vector<int> currents(static_cast<std::size_t>(r_count));
    std::vector<std::vector<char>> masks(static_cast<std::size_t>(r_count));
    std::vector<char> row_done(static_cast<std::size_t>(r_count));
    Mat mask_mat = Mat::Zero(r_count, n);
    for (int r = 0; r < r_count; ++r) {
      const DecodeState& s = states[static_cast<std::size_t>(r)];
      firsts[static_cast<std::size_t>(r)] = s.first;
      currents[static_cast<std::size_t>(r)] = s.current;
      row_done[static_cast<std::size_t>(r)] = s.done(inst) ? 1 : 0;
      masks[static_cast<std::size_t>(r)] = feasibility_mask(inst, s);
      for (int j = 0; j < n; ++j)
        mask_mat(r, j) = masks[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    }
    const ad::Id context = tape.add_row_broadcast(
        tape.add(tape.gather_rows(enc.fused, firsts), tape.gather_rows(enc.fused, currents)),
        mean_id);
    const ad::Id q = tape.matmul(context, ctx.param("dec.wq"));
    const ad::Id scores = tape.scale(tape.matmul_nt(q, keys), inv_sqrt_d);
    const ad::Id clipped = tape.scale(tape.tanh_op(scores), policy.config().logit_clip);
    const ad::Id logp = tape.masked_log_softmax_rows(clipped, mask_mat);
    // Copy: later tape ops may reallocate node storage and invalidate refs.
    const Mat lp = tape.value(logp);

    std::vector<int> choices(static_cast<std::size_t>(r_count));
    for (int r = 0; r < r_count; ++r)
      choices[static_cast<std::size_t>(r)] =
          choose(r, lp, masks[static_cast<std::size_t>(r)],
                 row_done[static_cast<std::size_t>(r)] != 0);
    total = tape.add(total, tape.gather_entry_per_row(logp, choices));

    for (int r = 0; r < r_count; ++r) {
      if (row_done[static_cast<std::size_t>(r)]) continue;
      const int node = choices[static_cast<std::size_t>(r)];
      Trajectory& traj = result.trajectories[static_cast<std::size_t>(r)];
      traj.nodes.push_back(node);
      traj.step_logps.push_back(lp(r, node));
      advance_state(inst, states[static_cast<std::size_t>(r)], node);
    }
  }

  const Mat& totals = tape.value(total);
  for (int r = 0; r < r_count; ++r) {
    Trajectory& traj = result.trajectories[static_cast<std::size_t>(r)];
    traj.total_logp = totals(r, 0);
    if (inst.is_cvrp()) {
      traj.cost = routes_cost(inst, routes_from_sequence(inst, traj.nodes));
    } else {
      traj.cost = tour_cost(inst, Tour{traj.nodes});
    }
    traj.reward = -traj.cost;
  }
  result.total_logp = total;
  return result;
}

std::vector<int> designated_starts(const Instance& inst) {
  std::vector<int> starts;
  if (inst.is_cvrp()) {
    for (int j = 0; j < inst.n(); ++j)
      if (j != inst.depot) starts.push_back(j);
  } else {
    starts.resize(static_cast<std::size_t>(inst.n()));
    std::iota(starts.begin(), starts.end(), 0);
  }
  return starts;
}

int greedy_pick(int row, const Mat& logp, const std::vector<char>& mask) {
  int best = -1;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    if (best < 0 || logp(row, j) > best_lp) {
      best = j;
      best_lp = logp(row, j);
    }
  }
  if (best < 0) throw std::logic_error("no feasible node to pick");
  return best;
}

int sample_pick(int row, const Mat& logp, const std::vector<char>& mask, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  int last_feasible = -1;
  for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    last_feasible = j;
    acc += std::exp(logp(row, j));
    if (u <= acc) return j;
  }
  if (last_feasible < 0) throw std::logic_error("no feasible node to sample");
  return last_feasible;
}

}  // namespace

Eigen::VectorXd decode_step(Policy& policy, const Policy::Encoded& enc, const Instance& inst,
                            const DecodeState& state) {
  if (state.current < 0 || state.first < 0)
    throw std::invalid_argument("decode_step needs a state with the first move applied");
  ad::Tape tape;
  enc::Ctx ctx{tape, policy.params(), policy.config(), false, {}};
  const ad::Id fused = tape.constant(enc.fused_value);
  const std::vector<char> mask = feasibility_mask(inst, state);
  Mat mask_mat(1, inst.n());
  for (int j = 0; j < inst.n(); ++j)
    mask_mat(0, j) = mask[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  const ad::Id context = tape.add_row_broadcast(
      tape.add(tape.gather_rows(fused, {state.first}), tape.gather_rows(fused, {state.current})),
      tape.mean_rows(fused));
  const ad::Id q = tape.matmul(context, ctx.param("dec.wq"));
  const ad::Id keys = tape.matmul(fused, ctx.param("dec.wk"));
  const ad::Id scores =
      tape.scale(tape.matmul_nt(q, keys), 1.0 / std::sqrt(static_cast<double>(policy.config().dim)));
  const ad::Id logp =
      tape.masked_log_softmax_rows(tape.scale(tape.tanh_op(scores), policy.config().logit_clip),
                                   mask_mat);
  const Mat& lp = tape.value(logp);
  Eigen::VectorXd probs(inst.n());
  for (int j = 0; j < inst.n(); ++j)
    probs[j] = mask[static_cast<std::size_t>(j)] ? std::exp(lp(0, j)) : 0.0;
  return probs;
}

TrajectoryBatch rollout_multistart(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                                   DecodeMode mode, std::uint64_t seed) {
  inst.check();
  const std::vector<int> starts = designated_starts(inst);
  std::vector<Rng> rngs;
  if (mode == DecodeMode::Sample) {
    rngs.reserve(starts.size());
    Rng base(seed);
    for (const int s : starts) rngs.push_back(base.derive(static_cast<std::uint64_t>(s)));
  }
  Chooser choose = [&](int row, const Mat& logp, const std::vector<char>& mask, bool) {
    if (mode == DecodeMode::Greedy) return greedy_pick(row, logp, mask);
    return sample_pick(row, logp, mask, rngs[static_cast<std::size_t>(row)]);
  };
  LockstepResult result = decode_lockstep(policy, enc, inst, starts, choose);
  TrajectoryBatch batch;
  batch.trajectories = std::move(result.trajectories);
  return batch;
}

TrajectoryBatch rollout_multistart(Policy& policy, const Instance& inst, DecodeMode mode,
                                   std::uint64_t seed) {
  Policy::Encoded enc = policy.encode(inst, /*with_grad=*/false);
  return rollout_multistart(policy, enc, inst, mode, seed);
}

ad::Id score_trajectories(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                          const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("no trajectories to score");
  std::vector<int> starts;
  std::vector<std::size_t> cursor(trajectories.size());
  const std::size_t prefix = inst.is_cvrp() ? 2 : 1;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& traj = trajectories[i];
    if (traj.nodes.size() < prefix) throw std::invalid_argument("trajectory too short");
    if (inst.is_cvrp() && traj.nodes[0] != inst.depot)
      throw std::invalid_argument("stored route sequence must begin at the depot");
    if (traj.nodes[prefix - 1] != traj.start)
      throw std::invalid_argument("stored trajectory start does not match its sequence");
    starts.push_back(traj.start);
    cursor[i] = prefix;
  }
  Chooser choose = [&](int row, const Mat&, const std::vector<char>& mask, bool row_done) {
    const Trajectory& traj = trajectories[static_cast<std::size_t>(row)];
    std::size_t& pos = cursor[static_cast<std::size_t>(row)];
    if (pos >= traj.nodes.size()) {
      if (!row_done) throw std::invalid_argument("stored trajectory ends before completion");
      return inst.depot;  // lockstep padding for finished rows
    }
    const int node = traj.nodes[pos];
    if (node < 0 || node >= inst.n() || !mask[static_cast<std::size_t>(node)])
      throw std::invalid_argument("stored trajectory violates feasibility during replay");
    ++pos;
    return node;
  };
  LockstepResult result = decode_lockstep(policy, enc, inst, starts, choose);
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    if (cursor[i] != trajectories[i].nodes.size())
      throw std::invalid_argument("stored trajectory not fully consumed by replay");
  return result.total_logp;
}

double score_trajectory(Policy& policy, const Instance& inst, const Trajectory& traj) {
  Policy::Encoded enc = policy.encode(inst, /*with_grad=*/false);
  const ad::Id total = score_trajectories(policy, enc, inst, {traj});
  return enc.tape->value(total)(0, 0);
}

SolveResult solve(Policy& policy, const Instance& inst, bool augment) {
  const auto t0 = std::chrono::steady_clock::now();
  inst.check();
  const std::array<Instance, 8> variants = augment_x8(inst);
  const int variant_count = augment ? static_cast<int>(variants.size()) : 1;

  SolveResult best;
  best.cost = std::numeric_limits<double>::infinity();
  best.augmented = augment;
  for (int v = 0; v < variant_count; ++v) {
    TrajectoryBatch batch =
        rollout_multistart(policy, variants[static_cast<std::size_t>(v)], DecodeMode::Greedy, 0);
    for (const Trajectory& traj : batch.trajectories) {
      // Costs are evaluated on the original coordinates; node indices are
      // unchanged by the symmetry transforms.
      double cost = 0.0;
      RouteSet routes;
      Tour tour;
      if (inst.is_cvrp()) {
        routes = routes_from_sequence(inst, traj.nodes);
        cost = routes_cost(inst, routes);
      } else {
        tour.order = traj.nodes;
        cost = tour_cost(inst, tour);
      }
      if (cost < best.cost) {
        best.cost = cost;
        best.tour = std::move(tour);
        best.routes = std::move(routes);
      }
    }
  }
  best.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

}  // namespace vagpo
