#include "vagpo/config.hpp"

#include <fstream>
#include <stdexcept>

#include "vagpo/common.hpp"

namespace vagpo {

nlohmann::json RunConfig::to_json() const {
  return {{"problem", problem},
          {"n", n},
          {"capacity", capacity},
          {"preset", preset},
          {"model", model.to_json()},
          {"agpo", agpo.to_json()},
          {"optimizer", optimizer},
          {"seed", seed},
          {"jobs", jobs},
          {"device", device},
          {"count", count},
          {"augment", augment},
          {"policy", policy},
          {"pool_size", pool_size},
          {"val_instances", val_instances},
          {"val_n", val_n},
          {"eval_interval", eval_interval},
          {"max_wall_time_s", max_wall_time_s},
          {"target_val_gap", target_val_gap},
          {"max_grad_steps", max_grad_steps},
          {"instances_path", instances_path},
          {"checkpoint_path", checkpoint_path},
          {"metrics_path", metrics_path},
          {"out_path", out_path}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.problem = j.value("problem", cfg.problem);
  cfg.n = j.value("n", cfg.n);
  cfg.capacity = j.value("capacity", cfg.capacity);
  cfg.preset = j.value("preset", cfg.preset);
  if (j.contains("model")) {
    cfg.model = ModelConfig::from_json(j["model"]);
  } else {
    cfg.model = ModelConfig::preset(cfg.preset);
  }
  if (j.contains("agpo")) cfg.agpo = AgpoConfig::from_json(j["agpo"]);
  cfg.optimizer = j.value("optimizer", cfg.optimizer);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.device = j.value("device", cfg.device);
  cfg.count = j.value("count", cfg.count);
  cfg.augment = j.value("augment", cfg.augment);
  cfg.policy = j.value("policy", cfg.policy);
  cfg.pool_size = j.value("pool_size", cfg.pool_size);
  cfg.val_instances = j.value("val_instances", cfg.val_instances);
  cfg.val_n = j.value("val_n", cfg.val_n);
  cfg.eval_interval = j.value("eval_interval", cfg.eval_interval);
  cfg.max_wall_time_s = j.value("max_wall_time_s", cfg.max_wall_time_s);
  cfg.target_val_gap = j.value("target_val_gap", cfg.target_val_gap);
  cfg.max_grad_steps = j.value("max_grad_steps", cfg.max_grad_steps);
  cfg.instances_path = j.value("instances_path", cfg.instances_path);
  cfg.checkpoint_path = j.value("checkpoint_path", cfg.checkpoint_path);
  cfg.metrics_path = j.value("metrics_path", cfg.metrics_path);
  cfg.out_path = j.value("out_path", cfg.out_path);
  cfg.model.problem = cfg.problem_type();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

void RunConfig::validate() const {
  problem_type();  // throws on unknown problem
  if (n < 2) throw std::invalid_argument("n must be at least 2");
  if (jobs < 1) throw std::invalid_argument("jobs must be at least 1");
  if (device != "cpu") throw std::invalid_argument("only device=cpu is supported");
  if (optimizer != "agpo" && optimizer != "reinforce")
    throw std::invalid_argument("optimizer must be 'agpo' or 'reinforce'");
}

TrainOptions RunConfig::train_options() const {
  TrainOptions opts;
  opts.problem = problem_type();
  opts.n = n;
  opts.cvrp_capacity = capacity;
  opts.model = model;
  opts.model.problem = opts.problem;
  opts.agpo = agpo;
  opts.data_seed = splitmix64(seed ^ 0x1ULL);
  opts.train_seed = splitmix64(seed ^ 0x2ULL);
  opts.model.init_seed = splitmix64(seed ^ 0x3ULL);
  opts.pool_size = pool_size;
  opts.val_instances = val_instances;
  opts.val_n = val_n;
  opts.eval_interval = eval_interval;
  opts.metrics_path = metrics_path;
  opts.checkpoint_path = checkpoint_path.empty() ? out_path : checkpoint_path;
  opts.max_wall_time_s = max_wall_time_s;
  opts.target_val_gap = target_val_gap;
  opts.max_grad_steps = max_grad_steps;
  return opts;
}

}  // namespace vagpo
