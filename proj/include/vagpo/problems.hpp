#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vagpo/common.hpp"

namespace vagpo {

enum class ProblemType { Tsp, Cvrp };

std::string to_string(ProblemType type);
ProblemType problem_type_from_string(const std::string& name);

// A routing instance on the unit square. TSP instances carry coordinates
// only; CVRP instances additionally carry integer demands (zero at the
// depot) and a vehicle capacity.
struct Instance {
  ProblemType type = ProblemType::Tsp;
  std::vector<Vec2> coords;
  std::vector<int> demands;  // empty for TSP; size n for CVRP
  int capacity = 0;          // 0 for TSP
  int depot = 0;
  std::optional<std::uint64_t> seed;  // generation provenance

  int n() const { return static_cast<int>(coords.size()); }
  bool is_cvrp() const { return type == ProblemType::Cvrp; }
  int num_customers() const { return is_cvrp() ? n() - 1 : n(); }
  double normalized_demand(int j) const {
    return static_cast<double>(demands[j]) / static_cast<double>(capacity);
  }

  // Throws std::invalid_argument when a type invariant is violated.
  void check() const;
  std::string id() const;
};

struct Tour {
  std::vector<int> order;  // permutation of [0, n)
};

// Every route begins and ends at the depot.
struct RouteSet {
  std::vector<std::vector<int>> routes;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_tour(const Instance& inst, const Tour& tour);
ValidationReport validate_routes(const Instance& inst, const RouteSet& routes);

// Total closed-loop length; throws std::invalid_argument (message lists
// every violation) when the solution is invalid for the instance.
double tour_cost(const Instance& inst, const Tour& tour);
double routes_cost(const Instance& inst, const RouteSet& routes);

Instance generate_tsp(int n, std::uint64_t seed);

// `num_customers` counts non-depot nodes; the resulting instance has
// num_customers + 1 nodes with the depot at index 0. `capacity <= 0`
// selects the size-dependent default.
Instance generate_cvrp(int num_customers, int capacity, std::uint64_t seed);

// 30/40/50 for 20/50/100 customers, piecewise-linear (rounded) in between,
// clamped outside.
int default_cvrp_capacity(int num_customers);

// The eight unit-square symmetries; index 0 is the identity.
Vec2 apply_symmetry(Vec2 p, int variant);
std::array<Instance, 8> augment_x8(const Instance& inst);

// Split a depot-delimited visit sequence (starting and ending at the depot)
// into routes; inverse of concatenation.
RouteSet routes_from_sequence(const Instance& inst, const std::vector<int>& seq);
std::vector<int> sequence_from_routes(const Instance& inst, const RouteSet& routes);

// Optional cached n*n distance matrix for repeated lookups (n <= 2000).
class DistanceCache {
 public:
  explicit DistanceCache(const Instance& inst);
  double operator()(int i, int j) const { return matrix_[static_cast<std::size_t>(i) * n_ + j]; }
  int n() const { return n_; }

 private:
  int n_;
  std::vector<double> matrix_;
};

}  // namespace vagpo
