#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vagpo/agpo.hpp"
#include "vagpo/problems.hpp"

namespace vagpo {

nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

// Line-delimited JSON; lines starting with '#' are comments. Doubles are
// emitted in shortest round-trip form, so coordinates survive a write/read
// cycle bit-exactly.
void write_instances_jsonl(const std::string& path, const std::vector<Instance>& instances);
std::vector<Instance> read_instances_jsonl(const std::string& path);

struct SolutionRecord {
  std::string instance_id;
  double cost = 0.0;
  std::vector<int> tour;                   // TSP
  std::vector<std::vector<int>> routes;    // CVRP
  bool augmented = false;
  double wall_time_s = 0.0;
};

nlohmann::json solution_to_json(const SolutionRecord& rec);
SolutionRecord solution_from_json(const nlohmann::json& j);

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_jsonl(const std::string& path);

// Training-curve figure: one polyline plus one marker per metrics row for
// each named series. Plots validation gap when every row of a series has
// one, mean reward otherwise.
void write_training_plot_svg(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<MetricsRow>>>& series);

}  // namespace vagpo
