#include "vagpo/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vagpo {

nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json coords = nlohmann::json::array();
  for (const Vec2& p : inst.coords) coords.push_back({p.x, p.y});
  nlohmann::json j = {{"type", to_string(inst.type)}, {"coords", std::move(coords)}};
  if (inst.is_cvrp()) {
    j["demands"] = inst.demands;
    j["capacity"] = inst.capacity;
    j["depot"] = inst.depot;
  }
  if (inst.seed.has_value()) j["seed"] = *inst.seed;
  return j;
}

Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.type = problem_type_from_string(j.at("type").get<std::string>());
  for (const auto& row : j.at("coords"))
    inst.coords.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
  if (inst.is_cvrp()) {
    inst.demands = j.at("demands").get<std::vector<int>>();
    inst.capacity = j.at("capacity").get<int>();
    inst.depot = j.value("depot", 0);
  }
  if (j.contains("seed")) inst.seed = j["seed"].get<std::uint64_t>();
  inst.check();
  return inst;
}

void write_instances_jsonl(const std::string& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open instance file for writing: " + path);
  out << "# vagpo instances v1\n";
  for (const Instance& inst : instances) out << instance_to_json(inst).dump() << "\n";
  if (!out) throw std::runtime_error("instance write failed: " + path);
}

std::vector<Instance> read_instances_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::vector<Instance> instances;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    instances.push_back(instance_from_json(nlohmann::json::parse(line)));
  }
  return instances;
}

nlohmann::json solution_to_json(const SolutionRecord& rec) {
  nlohmann::json j = {{"instance_id", rec.instance_id},
                      {"cost", rec.cost},
                      {"augmented", rec.augmented},
                      {"wall_time_s", rec.wall_time_s}};
  if (!rec.routes.empty()) {
    j["routes"] = rec.routes;
  } else {
    j["tour"] = rec.tour;
  }
  return j;
}

SolutionRecord solution_from_json(const nlohmann::json& j) {
  SolutionRecord rec;
  rec.instance_id = j.value("instance_id", std::string());
  rec.cost = j.at("cost").get<double>();
  rec.augmented = j.value("augmented", false);
  rec.wall_time_s = j.value("wall_time_s", 0.0);
  if (j.contains("routes")) rec.routes = j["routes"].get<std::vector<std::vector<int>>>();
  if (j.contains("tour")) rec.tour = j["tour"].get<std::vector<int>>();
  return rec;
}

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  for (const MetricsRow& row : rows) out << row.to_json().dump() << "\n";
}

std::vector<MetricsRow> read_metrics_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(MetricsRow::from_json(nlohmann::json::parse(line)));
  }
  return rows;
}

void write_training_plot_svg(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<MetricsRow>>>& series) {
  if (series.empty()) throw std::invalid_argument("no metrics series to plot");
  for (const auto& [name, rows] : series)
    if (rows.empty()) throw std::invalid_argument("metrics series is empty: " + name);

  const int width = 860, height = 500;
  const int ml = 70, mr = 20, mt = 40, mb = 50;
  const double plot_w = width - ml - mr;
  const double plot_h = height - mt - mb;

  auto series_values = [](const std::vector<MetricsRow>& rows) {
    const bool use_gap = std::all_of(rows.begin(), rows.end(),
                                     [](const MetricsRow& r) { return r.val_gap.has_value(); });
    std::vector<double> ys;
    ys.reserve(rows.size());
    for (const MetricsRow& r : rows) ys.push_back(use_gap ? *r.val_gap : r.mean_reward);
    return std::pair{ys, use_gap};
  };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  bool any_gap = false;
  for (const auto& [name, rows] : series) {
    auto [ys, use_gap] = series_values(rows);
    any_gap = any_gap || use_gap;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xmin = std::min(xmin, static_cast<double>(rows[i].step));
      xmax = std::max(xmax, static_cast<double>(rows[i].step));
      ymin = std::min(ymin, ys[i]);
      ymax = std::max(ymax, ys[i]);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return mt + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w << "\" y2=\""
      << mt + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"14\">outer step</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + plot_h / 2 << "\" text-anchor=\"middle\" font-size=\"14\" "
      << "transform=\"rotate(-90 18 " << mt + plot_h / 2 << ")\">"
      << (any_gap ? "validation gap" : "mean reward") << "</text>\n";

  int color_idx = 0;
  double legend_y = mt;
  for (const auto& [name, rows] : series) {
    const char* color = kColors[color_idx % 6];
    ++color_idx;
    auto [ys, use_gap] = series_values(rows);
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < rows.size(); ++i)
      svg << sx(static_cast<double>(rows[i].step)) << "," << sy(ys[i]) << " ";
    svg << "\"/>\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
      svg << "<circle cx=\"" << sx(static_cast<double>(rows[i].step)) << "\" cy=\"" << sy(ys[i])
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << ml + plot_w - 8 << "\" y=\"" << legend_y
        << "\" text-anchor=\"end\" font-size=\"13\" fill=\"" << color << "\">" << name
        << "</text>\n";
    legend_y += 18.0;
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open plot file for writing: " + path);
  out << svg.str();
  if (!out) throw std::runtime_error("plot write failed: " + path);
}

}  // namespace vagpo
