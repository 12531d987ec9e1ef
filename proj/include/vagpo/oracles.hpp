#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vagpo/problems.hpp"

namespace vagpo {

struct HeldKarpResult {
  Tour tour;
  double cost = 0.0;
};

// Exact TSP optimum by subset dynamic programming; n <= 16.
HeldKarpResult held_karp_tsp(const Instance& inst);

struct CvrpExactResult {
  RouteSet routes;
  double cost = 0.0;
};

// Exact CVRP optimum by permutation enumeration with optimal capacity-aware
// splitting; at most 8 customers.
CvrpExactResult brute_force_cvrp(const Instance& inst);

// Greedy closest-unvisited tour from the depot; ties broken by lowest index.
Tour nearest_neighbor(const Instance& inst);

// Best-improvement 2-edge exchange until no move improves by more than 1e-10.
Tour two_opt(const Instance& inst, Tour tour);

struct GapReport {
  std::string instance_id;
  double method_cost = 0.0;
  double oracle_cost = 0.0;
  double gap = 0.0;  // (method - oracle) / oracle
};

double gap(double method_cost, double oracle_cost);
GapReport make_gap_report(const std::string& instance_id, double method_cost, double oracle_cost);

// Comma-separated table with a fixed header.
void write_gap_csv(std::ostream& out, const std::vector<GapReport>& reports);

}  // namespace vagpo
