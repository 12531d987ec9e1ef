#include "vagpo/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace vagpo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

HeldKarpResult held_karp_tsp(const Instance& inst) {
  inst.check();
  const int n = inst.n();
  if (n > 16) throw std::invalid_argument("held_karp_tsp: limited to n <= 16");
  const DistanceCache dist(inst);

  const std::size_t num_masks = std::size_t{1} << n;
  // dp[mask * n + last]: cheapest path from node 0 through `mask`, ending at
  // `last`. Ties prefer the smallest predecessor, which keeps the
  // reconstruction deterministic.
  std::vector<double> dp(num_masks * static_cast<std::size_t>(n), kInf);
  std::vector<std::int8_t> parent(num_masks * static_cast<std::size_t>(n), -1);
  dp[(std::size_t{1} << 0) * static_cast<std::size_t>(n) + 0] = 0.0;

  for (std::size_t mask = 1; mask < num_masks; ++mask) {
    if (!(mask & 1)) continue;  // paths always contain node 0
    for (int last = 0; last < n; ++last) {
      const double cost_here = dp[mask * static_cast<std::size_t>(n) + last];
      if (cost_here == kInf) continue;
      for (int next = 1; next < n; ++next) {
        if (mask & (std::size_t{1} << next)) continue;
        const std::size_t next_mask = mask | (std::size_t{1} << next);
        const double candidate = cost_here + dist(last, next);
        double& slot = dp[next_mask * static_cast<std::size_t>(n) + next];
        if (candidate < slot) {
          slot = candidate;
          parent[next_mask * static_cast<std::size_t>(n) + next] = static_cast<std::int8_t>(last);
        }
      }
    }
  }

  const std::size_t full = num_masks - 1;
  double best = kInf;
  int best_last = 0;
  for (int last = 1; last < n; ++last) {
    const double candidate = dp[full * static_cast<std::size_t>(n) + last] + dist(last, 0);
    if (candidate < best) {
      best = candidate;
      best_last = last;
    }
  }

  HeldKarpResult result;
  if (n == 2) {
    result.tour.order = {0, 1};
    result.cost = 2.0 * dist(0, 1);
    return result;
  }
  std::vector<int> order;
  std::size_t mask = full;
  int node = best_last;
  while (node != -1) {
    order.push_back(node);
    const int prev = parent[mask * static_cast<std::size_t>(n) + node];
    mask &= ~(std::size_t{1} << node);
    node = prev;
  }
  std::reverse(order.begin(), order.end());  // starts at node 0
  // Canonical direction: the smaller of the two traversals.
  if (order.size() > 2 && order[1] > order.back()) {
    std::reverse(order.begin() + 1, order.end());
  }
  result.tour.order = std::move(order);
  result.cost = best;
  return result;
}

CvrpExactResult brute_force_cvrp(const Instance& inst) {
  inst.check();
  if (!inst.is_cvrp()) throw std::invalid_argument("brute_force_cvrp: expected a CVRP instance");
  const int m = inst.num_customers();
  if (m > 8) throw std::invalid_argument("brute_force_cvrp: limited to 8 customers");
  const DistanceCache dist(inst);
  const int depot = inst.depot;

  std::vector<int> customers;
  for (int v = 0; v < inst.n(); ++v) {
    if (v != depot) customers.push_back(v);
  }
  std::sort(customers.begin(), customers.end());

  CvrpExactResult best;
  best.cost = kInf;
  std::vector<double> best_prefix(static_cast<std::size_t>(m) + 1);
  std::vector<int> split_from(static_cast<std::size_t>(m) + 1);

  // Every route set equals some customer permutation cut into consecutive
  // capacity-feasible segments, so enumerating permutations with an optimal
  // split DP is exhaustive.
  do {
    best_prefix[0] = 0.0;
    for (int i = 1; i <= m; ++i) {
      best_prefix[static_cast<std::size_t>(i)] = kInf;
      long long load = 0;
      double interior = 0.0;
      for (int j = i - 1; j >= 0; --j) {
        load += inst.demands[customers[static_cast<std::size_t>(j)]];
        if (load > inst.capacity) break;
        if (j + 1 < i) {
          interior += dist(customers[static_cast<std::size_t>(j)],
                           customers[static_cast<std::size_t>(j) + 1]);
        }
        const double route_cost = dist(depot, customers[static_cast<std::size_t>(j)]) + interior +
                                  dist(customers[static_cast<std::size_t>(i) - 1], depot);
        const double candidate = best_prefix[static_cast<std::size_t>(j)] + route_cost;
        if (candidate < best_prefix[static_cast<std::size_t>(i)]) {
          best_prefix[static_cast<std::size_t>(i)] = candidate;
          split_from[static_cast<std::size_t>(i)] = j;
        }
      }
    }
    if (best_prefix[static_cast<std::size_t>(m)] < best.cost) {
      best.cost = best_prefix[static_cast<std::size_t>(m)];
      best.routes.routes.clear();
      int end = m;
      while (end > 0) {
        const int begin = split_from[static_cast<std::size_t>(end)];
        std::vector<int> route{depot};
        for (int i = begin; i < end; ++i) route.push_back(customers[static_cast<std::size_t>(i)]);
        route.push_back(depot);
        best.routes.routes.push_back(std::move(route));
        end = begin;
      }
      std::reverse(best.routes.routes.begin(), best.routes.routes.end());
    }
  } while (std::next_permutation(customers.begin(), customers.end()));

  return best;
}

Tour nearest_neighbor(const Instance& inst) {
  inst.check();
  const int n = inst.n();
  Tour tour;
  tour.order.reserve(static_cast<std::size_t>(n));
  std::vector<char> visited(static_cast<std::size_t>(n), 0);
  int current = inst.depot;
  visited[static_cast<std::size_t>(current)] = 1;
  tour.order.push_back(current);
  for (int step = 1; step < n; ++step) {
    int best_node = -1;
    double best_dist = kInf;
    for (int v = 0; v < n; ++v) {
      if (visited[static_cast<std::size_t>(v)]) continue;
      const double d = euclidean_cost(inst.coords[current], inst.coords[v]);
      if (d < best_dist) {
        best_dist = d;
        best_node = v;
      }
    }
    visited[static_cast<std::size_t>(best_node)] = 1;
    tour.order.push_back(best_node);
    current = best_node;
  }
  return tour;
}

Tour two_opt(const Instance& inst, Tour tour) {
  const ValidationReport report = validate_tour(inst, tour);
  if (!report.ok()) throw std::invalid_argument("two_opt: " + report.to_string());
  const int n = inst.n();
  if (n < 4) return tour;
  const DistanceCache dist(inst);
  constexpr double kMinImprovement = 1e-10;

  for (;;) {
    double best_delta = -kMinImprovement;
    int best_i = -1, best_j = -1;
    for (int i = 0; i + 1 < n; ++i) {
      const int a = tour.order[static_cast<std::size_t>(i)];
      const int b = tour.order[static_cast<std::size_t>(i) + 1];
      const int j_end = (i == 0) ? n - 1 : n;
      for (int j = i + 2; j < j_end; ++j) {
        const int c = tour.order[static_cast<std::size_t>(j)];
        const int d = tour.order[static_cast<std::size_t>((j + 1) % n)];
        const double delta = dist(a, c) + dist(b, d) - dist(a, b) - dist(c, d);
        if (delta < best_delta) {
          best_delta = delta;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_i < 0) break;
    std::reverse(tour.order.begin() + best_i + 1, tour.order.begin() + best_j + 1);
  }
  return tour;
}

double gap(double method_cost, double oracle_cost) {
  if (oracle_cost == 0.0) return method_cost == 0.0 ? 0.0 : kInf;
  return (method_cost - oracle_cost) / oracle_cost;
}

GapReport make_gap_report(const std::string& instance_id, double method_cost, double oracle_cost) {
  return GapReport{instance_id, method_cost, oracle_cost, gap(method_cost, oracle_cost)};
}

void write_gap_csv(std::ostream& out, const std::vector<GapReport>& reports) {
  out << "instance_id,method_cost,oracle_cost,gap\n";
  out.precision(17);
  for (const auto& report : reports) {
    out << report.instance_id << "," << report.method_cost << "," << report.oracle_cost << ","
        << report.gap << "\n";
  }
}

}  // namespace vagpo
