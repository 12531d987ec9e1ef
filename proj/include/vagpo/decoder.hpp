#pragma once

#include <cstdint>
#include <vector>

#include "vagpo/encoder.hpp"
#include "vagpo/problems.hpp"

namespace vagpo {

// Constructive decoding state for one trajectory.
struct DecodeState {
  int current = -1;
  int first = -1;
  std::vector<char> visited;   // per node; CVRP never marks the depot
  int remaining_units = 0;     // CVRP capacity left, integer demand units
  int capacity = 1;            // CVRP capacity (for the normalized view)
  int step = 0;                // decisions taken (forced first move included)
  int visited_count = 0;       // TSP: nodes; CVRP: customers

  double remaining() const {  // normalized remaining capacity
    return static_cast<double>(remaining_units) / static_cast<double>(capacity);
  }
  bool done(const Instance& inst) const;
};

DecodeState initial_state(const Instance& inst);
// Applies one move (visit `node`) to the state.
void advance_state(const Instance& inst, DecodeState& state, int node);
// True per node iff choosing it next is allowed. TSP: unvisited nodes.
// CVRP: unvisited customers whose demand fits the remaining capacity; the
// depot, except when the vehicle is already there while feasible customers
// remain. A finished CVRP trajectory keeps only the depot feasible.
std::vector<char> feasibility_mask(const Instance& inst, const DecodeState& state);

struct Trajectory {
  int start = -1;                  // forced first move
  std::vector<int> nodes;          // full visit sequence (CVRP begins at the depot)
  std::vector<double> step_logps;  // one per free decision
  double total_logp = 0.0;
  double cost = 0.0;
  double reward = 0.0;  // -cost
};

struct TrajectoryBatch {
  std::vector<Trajectory> trajectories;
};

enum class DecodeMode { Greedy, Sample };

// Probability distribution over next nodes for one state (inference only).
Eigen::VectorXd decode_step(Policy& policy, const Policy::Encoded& enc, const Instance& inst,
                            const DecodeState& state);

// One trajectory per designated start: every node (TSP) or every customer
// (CVRP). Sample mode derives one named stream per (seed, start).
TrajectoryBatch rollout_multistart(Policy& policy, const Instance& inst, DecodeMode mode,
                                   std::uint64_t seed);
TrajectoryBatch rollout_multistart(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                                   DecodeMode mode, std::uint64_t seed);

// Teacher-forced replay of stored trajectories on `enc.tape`; returns an
// R x 1 node holding each trajectory's total log-probability, differentiable
// through the policy parameters bound to the tape.
ad::Id score_trajectories(Policy& policy, Policy::Encoded& enc, const Instance& inst,
                          const std::vector<Trajectory>& trajectories);
// Convenience scalar (detached) for a single trajectory.
double score_trajectory(Policy& policy, const Instance& inst, const Trajectory& traj);

struct SolveResult {
  double cost = 0.0;
  Tour tour;        // TSP
  RouteSet routes;  // CVRP
  bool augmented = false;
  double wall_time_s = 0.0;
};

// Greedy multi-start inference; with augment=true the instance's 7
// non-identity reflections/rotations are also decoded and the best feasible
// solution (evaluated on the original coordinates) is returned.
SolveResult solve(Policy& policy, const Instance& inst, bool augment);

}  // namespace vagpo
