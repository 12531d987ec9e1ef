#include "vagpo/problems.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vagpo {

std::string to_string(ProblemType type) {
  return type == ProblemType::Tsp ? "tsp" : "cvrp";
}

ProblemType problem_type_from_string(const std::string& name) {
  if (name == "tsp") return ProblemType::Tsp;
  if (name == "cvrp") return ProblemType::Cvrp;
  throw std::invalid_argument("unknown problem type: " + name);
}

void Instance::check() const {
  if (n() < 2) throw std::invalid_argument("instance must have at least 2 nodes");
  if (depot < 0 || depot >= n()) throw std::invalid_argument("depot index out of range");
  for (const Vec2& p : coords) {
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      throw std::invalid_argument("coordinate outside the unit square");
    }
  }
  if (is_cvrp()) {
    if (static_cast<int>(demands.size()) != n()) {
      throw std::invalid_argument("demands size must equal node count");
    }
    if (capacity <= 0) throw std::invalid_argument("capacity must be positive");
    if (demands[depot] != 0) throw std::invalid_argument("depot demand must be zero");
    for (int j = 0; j < n(); ++j) {
      if (j == depot) continue;
      if (demands[j] <= 0 || demands[j] > capacity) {
        throw std::invalid_argument("customer demand must lie in (0, capacity]");
      }
    }
  } else if (!demands.empty()) {
    throw std::invalid_argument("TSP instance must not carry demands");
  }
}

std::string Instance::id() const {
  std::ostringstream out;
  out << to_string(type) << "-n" << n();
  if (seed) out << "-s" << *seed;
  return out.str();
}

std::string ValidationReport::to_string() const {
  if (ok()) return "ok";
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i > 0) out << "; ";
    out << violations[i];
  }
  return out.str();
}

namespace {

// Reports every violation, not just the first.
void check_permutation(int n, const std::vector<int>& order, ValidationReport& report) {
  if (static_cast<int>(order.size()) != n) {
    report.violations.push_back("length " + std::to_string(order.size()) +
                                " does not match node count " + std::to_string(n));
  }
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int v = order[i];
    if (v < 0 || v >= n) {
      report.violations.push_back("node index " + std::to_string(v) + " at position " +
                                  std::to_string(i) + " out of range");
      continue;
    }
    if (++count[static_cast<std::size_t>(v)] == 2) {
      report.violations.push_back("duplicate node " + std::to_string(v) + " at position " +
                                  std::to_string(i));
    }
  }
  for (int v = 0; v < n; ++v) {
    if (count[static_cast<std::size_t>(v)] == 0) {
      report.violations.push_back("missing node " + std::to_string(v));
    }
  }
}

}  // namespace

ValidationReport validate_tour(const Instance& inst, const Tour& tour) {
  ValidationReport report;
  check_permutation(inst.n(), tour.order, report);
  return report;
}

ValidationReport validate_routes(const Instance& inst, const RouteSet& routes) {
  ValidationReport report;
  if (!inst.is_cvrp()) {
    report.violations.push_back("route sets only apply to CVRP instances");
    return report;
  }
  std::vector<int> count(static_cast<std::size_t>(inst.n()), 0);
  for (std::size_t k = 0; k < routes.routes.size(); ++k) {
    const auto& route = routes.routes[k];
    if (route.size() < 2 || route.front() != inst.depot || route.back() != inst.depot) {
      report.violations.push_back("route " + std::to_string(k) +
                                  " must begin and end at the depot");
    }
    long long demand_sum = 0;
    for (std::size_t i = 0; i < route.size(); ++i) {
      const int v = route[i];
      if (v < 0 || v >= inst.n()) {
        report.violations.push_back("route " + std::to_string(k) + " has out-of-range node " +
                                    std::to_string(v));
        continue;
      }
      if (v == inst.depot) {
        if (i != 0 && i + 1 != route.size()) {
          report.violations.push_back("route " + std::to_string(k) +
                                      " visits the depot mid-route");
        }
        continue;
      }
      demand_sum += inst.demands[v];
      if (++count[static_cast<std::size_t>(v)] == 2) {
        report.violations.push_back("node " + std::to_string(v) + " visited more than once");
      }
    }
    if (demand_sum > inst.capacity) {
      report.violations.push_back("route " + std::to_string(k) + " demand sum " +
                                  std::to_string(demand_sum) + " exceeds capacity " +
                                  std::to_string(inst.capacity));
    }
  }
  for (int v = 0; v < inst.n(); ++v) {
    if (v == inst.depot) continue;
    if (count[static_cast<std::size_t>(v)] == 0) {
      report.violations.push_back("node " + std::to_string(v) + " not visited by any route");
    }
  }
  return report;
}

double tour_cost(const Instance& inst, const Tour& tour) {
  const ValidationReport report = validate_tour(inst, tour);
  if (!report.ok()) throw std::invalid_argument("invalid tour: " + report.to_string());
  double total = 0.0;
  const int n = inst.n();
  for (int i = 0; i + 1 < n; ++i) {
    total += euclidean_cost(inst.coords[tour.order[i]], inst.coords[tour.order[i + 1]]);
  }
  total += euclidean_cost(inst.coords[tour.order[n - 1]], inst.coords[tour.order[0]]);
  return total;
}

double routes_cost(const Instance& inst, const RouteSet& routes) {
  const ValidationReport report = validate_routes(inst, routes);
  if (!report.ok()) throw std::invalid_argument("invalid routes: " + report.to_string());
  double total = 0.0;
  for (const auto& route : routes.routes) {
    for (std::size_t i = 0; i + 1 < route.size(); ++i) {
      total += euclidean_cost(inst.coords[route[i]], inst.coords[route[i + 1]]);
    }
  }
  return total;
}

Instance generate_tsp(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_tsp: n must be at least 2");
  Rng rng(seed);
  Instance inst;
  inst.type = ProblemType::Tsp;
  inst.coords.resize(static_cast<std::size_t>(n));
  for (auto& p : inst.coords) {
    p.x = rng.uniform01();
    p.y = rng.uniform01();
  }
  inst.seed = seed;
  return inst;
}

int default_cvrp_capacity(int num_customers) {
  // Interpolates the 20/50/100-customer conventions.
  if (num_customers <= 20) return 30;
  if (num_customers >= 100) return 50;
  if (num_customers <= 50) {
    return static_cast<int>(std::lround(30.0 + (num_customers - 20) * 10.0 / 30.0));
  }
  return static_cast<int>(std::lround(40.0 + (num_customers - 50) * 10.0 / 50.0));
}

Instance generate_cvrp(int num_customers, int capacity, std::uint64_t seed) {
  if (num_customers < 2) {
    throw std::invalid_argument("generate_cvrp: need at least 2 customers");
  }
  if (capacity <= 0) capacity = default_cvrp_capacity(num_customers);
  if (capacity < 9) {
    throw std::invalid_argument("generate_cvrp: capacity below the maximum demand of 9");
  }
  Rng rng(seed);
  Instance inst;
  inst.type = ProblemType::Cvrp;
  inst.capacity = capacity;
  const int n = num_customers + 1;
  inst.coords.resize(static_cast<std::size_t>(n));
  inst.demands.assign(static_cast<std::size_t>(n), 0);
  for (auto& p : inst.coords) {
    p.x = rng.uniform01();
    p.y = rng.uniform01();
  }
  for (int j = 1; j < n; ++j) inst.demands[static_cast<std::size_t>(j)] = rng.uniform_int(1, 9);
  inst.seed = seed;
  return inst;
}

Vec2 apply_symmetry(Vec2 p, int variant) {
  switch (variant) {
    case 0: return {p.x, p.y};
    case 1: return {p.y, p.x};
    case 2: return {p.x, 1.0 - p.y};
    case 3: return {p.y, 1.0 - p.x};
    case 4: return {1.0 - p.x, p.y};
    case 5: return {1.0 - p.y, p.x};
    case 6: return {1.0 - p.x, 1.0 - p.y};
    case 7: return {1.0 - p.y, 1.0 - p.x};
    default: throw std::invalid_argument("symmetry variant must be in [0, 8)");
  }
}

std::array<Instance, 8> augment_x8(const Instance& inst) {
  std::array<Instance, 8> variants;
  for (int k = 0; k < 8; ++k) {
    variants[static_cast<std::size_t>(k)] = inst;
    if (k == 0) continue;
    for (auto& p : variants[static_cast<std::size_t>(k)].coords) p = apply_symmetry(p, k);
  }
  return variants;
}

RouteSet routes_from_sequence(const Instance& inst, const std::vector<int>& seq) {
  if (seq.empty() || seq.front() != inst.depot || seq.back() != inst.depot) {
    throw std::invalid_argument("sequence must begin and end at the depot");
  }
  RouteSet result;
  std::vector<int> route{inst.depot};
  for (std::size_t i = 1; i < seq.size(); ++i) {
    route.push_back(seq[i]);
    if (seq[i] == inst.depot) {
      if (route.size() > 2) result.routes.push_back(route);
      route.assign(1, inst.depot);
    }
  }
  return result;
}

std::vector<int> sequence_from_routes(const Instance& inst, const RouteSet& routes) {
  std::vector<int> seq{inst.depot};
  for (const auto& route : routes.routes) {
    for (std::size_t i = 1; i < route.size(); ++i) seq.push_back(route[i]);
  }
  return seq;
}

DistanceCache::DistanceCache(const Instance& inst) : n_(inst.n()) {
  if (n_ > 2000) throw std::invalid_argument("DistanceCache limited to n <= 2000");
  matrix_.resize(static_cast<std::size_t>(n_) * n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      matrix_[static_cast<std::size_t>(i) * n_ + j] = euclidean_cost(inst.coords[i], inst.coords[j]);
    }
  }
}

}  // namespace vagpo
