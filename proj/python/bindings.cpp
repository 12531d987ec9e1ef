// Python bindings for the routing toolkit: instance generation, file I/O,
// rasterization, exact/heuristic oracles, policy inference, and training.
// Structured results cross the boundary as JSON strings; the package wrapper
// decodes them into plain Python objects.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "vagpo/agpo.hpp"
#include "vagpo/config.hpp"
#include "vagpo/decoder.hpp"
#include "vagpo/io.hpp"
#include "vagpo/oracles.hpp"
#include "vagpo/raster.hpp"

namespace py = pybind11;
using namespace vagpo;

namespace {

ModelConfig make_model_config(const std::string& preset, const std::string& problem,
                              const std::string& backbone, std::uint64_t seed) {
  ModelConfig cfg = ModelConfig::preset(preset);
  if (problem == "tsp") {
    cfg.problem = ProblemType::Tsp;
  } else if (problem == "cvrp") {
    cfg.problem = ProblemType::Cvrp;
  } else {
    throw std::invalid_argument("problem must be 'tsp' or 'cvrp'");
  }
  cfg.backbone = backbone;
  cfg.init_seed = seed;
  return cfg;
}

std::string solve_to_json(Policy& policy, const Instance& inst, bool augment) {
  const SolveResult result = solve(policy, inst, augment);
  SolutionRecord rec;
  rec.instance_id = inst.id();
  rec.cost = result.cost;
  rec.augmented = result.augmented;
  rec.wall_time_s = result.wall_time_s;
  if (inst.is_cvrp()) {
    rec.routes = result.routes.routes;
  } else {
    rec.tour = result.tour.order;
  }
  return solution_to_json(rec).dump();
}

std::string train_from_json(const std::string& config_json) {
  RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config_json));
  cfg.validate();
  TrainOptions opts = cfg.train_options();
  Policy policy(opts.model);
  const TrainResult result =
      (cfg.optimizer == "reinforce") ? train_reinforce(policy, opts) : train_agpo(policy, opts);
  nlohmann::json rows = nlohmann::json::array();
  for (const MetricsRow& row : result.metrics) rows.push_back(row.to_json());
  const nlohmann::json summary = {{"grad_steps", result.grad_steps},
                                  {"diverged", result.diverged},
                                  {"metrics", rows}};
  return summary.dump();
}

py::array_t<float> raster_to_array(const Instance& inst) {
  const RasterImage image = rasterize(inst);
  py::array_t<float> array({image.height, image.width, 3});
  std::copy(image.pixels.begin(), image.pixels.end(), array.mutable_data());
  return array;
}

}  // namespace

PYBIND11_MODULE(_vagpo, m) {
  m.doc() = "Routing toolkit: vision-augmented encodings with preference-group training";

  py::class_<Instance>(m, "Instance")
      .def_property_readonly("n", &Instance::n)
      .def_property_readonly("is_cvrp", &Instance::is_cvrp)
      .def_property_readonly("id", &Instance::id)
      .def_readonly("capacity", &Instance::capacity)
      .def_readonly("depot", &Instance::depot)
      .def_readonly("demands", &Instance::demands)
      .def_property_readonly("coords",
                             [](const Instance& inst) {
                               std::vector<std::pair<double, double>> out;
                               out.reserve(inst.coords.size());
                               for (const Vec2& p : inst.coords) out.emplace_back(p.x, p.y);
                               return out;
                             })
      .def("to_json", [](const Instance& inst) { return instance_to_json(inst).dump(); })
      .def("__repr__", [](const Instance& inst) { return "<Instance " + inst.id() + ">"; });

  m.def("generate_tsp", &generate_tsp, py::arg("n"), py::arg("seed"));
  m.def("generate_cvrp", &generate_cvrp, py::arg("num_customers"), py::arg("capacity") = 0,
        py::arg("seed") = 0,
        "Capacity 0 selects the size-dependent default.");
  m.def("instance_from_json",
        [](const std::string& text) { return instance_from_json(nlohmann::json::parse(text)); });
  m.def("read_instances", &read_instances_jsonl, py::arg("path"));
  m.def("write_instances", &write_instances_jsonl, py::arg("path"), py::arg("instances"));
  m.def("augment_x8", [](const Instance& inst) {
    const std::array<Instance, 8> variants = augment_x8(inst);
    return std::vector<Instance>(variants.begin(), variants.end());
  });

  m.def("rasterize", &raster_to_array, py::arg("instance"),
        "224x224x3 float32 image: occupancy, depot flag, normalized demand.");
  m.def("pixel_collision_prob", &pixel_collision_prob, py::arg("n"), py::arg("cells"));
  m.def("at_most_one_collision_prob", &at_most_one_collision_prob, py::arg("n"),
        py::arg("cells"));

  m.def("held_karp", [](const Instance& inst) {
    const HeldKarpResult result = held_karp_tsp(inst);
    return std::make_pair(result.tour.order, result.cost);
  });
  m.def("brute_force_cvrp", [](const Instance& inst) {
    const CvrpExactResult result = brute_force_cvrp(inst);
    return std::make_pair(result.routes.routes, result.cost);
  });
  m.def("nearest_neighbor",
        [](const Instance& inst) { return nearest_neighbor(inst).order; });
  m.def("two_opt", [](const Instance& inst, const std::vector<int>& order) {
    return two_opt(inst, Tour{order}).order;
  });
  m.def("tour_cost",
        [](const Instance& inst, const std::vector<int>& order) {
          return tour_cost(inst, Tour{order});
        });
  m.def("routes_cost", [](const Instance& inst, const std::vector<std::vector<int>>& routes) {
    return routes_cost(inst, RouteSet{routes});
  });
  m.def("validate_tour", [](const Instance& inst, const std::vector<int>& order) {
    const ValidationReport report = validate_tour(inst, Tour{order});
    return std::make_pair(report.ok(), report.to_string());
  });
  m.def("validate_routes", [](const Instance& inst, const std::vector<std::vector<int>>& routes) {
    const ValidationReport report = validate_routes(inst, RouteSet{routes});
    return std::make_pair(report.ok(), report.to_string());
  });

  py::class_<Policy>(m, "Policy")
      .def(py::init([](const std::string& preset, const std::string& problem,
                       const std::string& backbone, std::uint64_t seed) {
             return Policy(make_model_config(preset, problem, backbone, seed));
           }),
           py::arg("preset") = "default", py::arg("problem") = "tsp",
           py::arg("backbone") = "resnet18", py::arg("seed") = 2024)
      .def_static("load", [](const std::string& path) { return Policy::load(path); },
                  py::arg("path"))
      .def("save",
           [](Policy& policy, const std::string& path) { policy.save(path, 0, nullptr); },
           py::arg("path"))
      .def("config", [](const Policy& policy) { return policy.config().to_json().dump(); })
      .def("solve", &solve_to_json, py::arg("instance"), py::arg("augment") = true,
           "Greedy multi-start inference; returns the solution record as JSON.");

  m.def("train", &train_from_json, py::arg("config_json"),
        "Run a training job described by a run-config JSON string; returns a "
        "JSON summary with per-step metrics.");
}
