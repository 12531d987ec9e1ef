// vagpo: command-line front end for the routing toolkit. Subcommands:
//   generate   write random instance files
//   train      preference-group or policy-gradient training
//   eval       batch evaluation with gap reports against exact oracles
//   solve      solve a single instance and print the solution record
//   rasterize  export instance images and collision statistics
//   plot       render training curves from metrics logs
#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include "vagpo/agpo.hpp"
#include "vagpo/config.hpp"
#include "vagpo/decoder.hpp"
#include "vagpo/io.hpp"
#include "vagpo/oracles.hpp"
#include "vagpo/raster.hpp"

namespace {

using namespace vagpo;

// Flag mirror for one subcommand; only values the user actually passed are
// copied into the RunConfig, giving flags > config file > defaults.
struct FlagSet {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string problem;
  int n = 0;
  int capacity = 0;
  int count = 0;
  std::string preset;
  std::string backbone;
  std::string backbone_weights;
  std::string optimizer;
  std::string policy;
  std::string checkpoint;
  std::string instances;
  std::string metrics;
  int steps = 0;
  int batch_size = 0;
  int inner_iters = 0;
  int top_k = 0;
  double beta_w = 0.0;
  double beta_l = 0.0;
  double lr = 0.0;
  double weight_decay = 0.0;
  int ref_refresh = 0;
  bool resample = false;
  bool ref_greedy = false;
  int pool_size = 0;
  int val_instances = 0;
  int val_n = 0;
  int eval_interval = 0;
  double max_wall_time = 0.0;
  double target_val_gap = 0.0;
  long long max_grad_steps = 0;
  bool augment = false;
  bool no_augment = false;
  int index = 0;
  std::vector<std::string> metrics_files;
};

void add_shared(CLI::App* sub, FlagSet& f) {
  sub->add_option("--config", f.config_path, "JSON run-config file; flags override its values")
      ->envname("VAGPO_CONFIG");
  sub->add_option("--seed", f.seed, "master seed; all randomness derives from it")
      ->envname("VAGPO_SEED");
  sub->add_option("--jobs", f.jobs, "worker threads for per-instance fan-out")
      ->envname("VAGPO_JOBS");
  sub->add_option("--out", f.out, "output path")->envname("VAGPO_OUT");
}

RunConfig merge_config(const CLI::App* sub, const FlagSet& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = RunConfig::from_file(f.config_path);
  auto given = [&](const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--jobs")) cfg.jobs = f.jobs;
  if (given("--out")) cfg.out_path = f.out;
  if (given("--problem")) cfg.problem = f.problem;
  if (given("--n")) cfg.n = f.n;
  if (given("--capacity")) cfg.capacity = f.capacity;
  if (given("--count")) cfg.count = f.count;
  if (given("--preset")) {
    cfg.preset = f.preset;
    const ModelConfig base = ModelConfig::preset(f.preset);
    cfg.model.dim = base.dim;
    cfg.model.layers = base.layers;
    cfg.model.heads = base.heads;
    cfg.model.ff_dim = base.ff_dim;
  }
  if (given("--backbone")) cfg.model.backbone = f.backbone;
  if (given("--backbone-weights")) cfg.model.backbone_weights = f.backbone_weights;
  if (given("--optimizer")) cfg.optimizer = f.optimizer;
  if (given("--policy")) cfg.policy = f.policy;
  if (given("--checkpoint")) cfg.checkpoint_path = f.checkpoint;
  if (given("--instances")) cfg.instances_path = f.instances;
  if (given("--metrics")) cfg.metrics_path = f.metrics;
  if (given("--steps")) cfg.agpo.outer_steps = f.steps;
  if (given("--batch-size")) cfg.agpo.batch_size = f.batch_size;
  if (given("--inner-iters")) cfg.agpo.inner_iters = f.inner_iters;
  if (given("--top-k")) cfg.agpo.top_k = f.top_k;
  if (given("--beta-w")) cfg.agpo.beta_w = f.beta_w;
  if (given("--beta-l")) cfg.agpo.beta_l = f.beta_l;
  if (given("--lr")) cfg.agpo.lr = f.lr;
  if (given("--weight-decay")) cfg.agpo.weight_decay = f.weight_decay;
  if (given("--ref-refresh")) cfg.agpo.ref_refresh_interval = f.ref_refresh;
  if (given("--resample")) cfg.agpo.rescore_stored = !f.resample;
  if (given("--ref-greedy")) cfg.agpo.ref_sampling = !f.ref_greedy;
  if (given("--pool-size")) cfg.pool_size = f.pool_size;
  if (given("--val-instances")) cfg.val_instances = f.val_instances;
  if (given("--val-n")) cfg.val_n = f.val_n;
  if (given("--eval-interval")) cfg.eval_interval = f.eval_interval;
  if (given("--max-wall-time")) cfg.max_wall_time_s = f.max_wall_time;
  if (given("--target-val-gap")) cfg.target_val_gap = f.target_val_gap;
  if (given("--max-grad-steps")) cfg.max_grad_steps = f.max_grad_steps;
  if (given("--augment")) cfg.augment = true;
  if (given("--no-augment")) cfg.augment = false;
  cfg.model.problem = cfg.problem_type();
  cfg.validate();
  return cfg;
}

std::vector<Instance> generate_batch(const RunConfig& cfg) {
  std::vector<Instance> instances;
  instances.reserve(static_cast<std::size_t>(cfg.count));
  std::uint64_t s = cfg.seed;
  for (int i = 0; i < cfg.count; ++i) {
    s = splitmix64(s);
    if (cfg.problem_type() == ProblemType::Cvrp) {
      instances.push_back(generate_cvrp(cfg.n, cfg.capacity, s));
    } else {
      instances.push_back(generate_tsp(cfg.n, s));
    }
  }
  return instances;
}

int cmd_generate(const RunConfig& cfg) {
  if (cfg.out_path.empty()) throw std::invalid_argument("generate requires --out");
  if (cfg.count < 0) throw std::invalid_argument("count must be nonnegative");
  write_instances_jsonl(cfg.out_path, generate_batch(cfg));
  std::cout << "wrote " << cfg.count << " " << cfg.problem << " instances to " << cfg.out_path
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  TrainOptions opts = cfg.train_options();
  opts.on_step = [](const MetricsRow& row) {
    std::cout << "step " << row.step << "  grad_steps " << row.grad_steps << "  loss " << row.loss
              << "  mean_reward " << row.mean_reward;
    if (row.val_gap.has_value()) std::cout << "  val_gap " << *row.val_gap;
    std::cout << "  wall_s " << row.wall_time_s << "\n";
  };
  Policy policy(opts.model);
  TrainResult result = (cfg.optimizer == "reinforce") ? train_reinforce(policy, opts)
                                                      : train_agpo(policy, opts);
  std::cout << "finished: " << result.metrics.size() << " outer steps, " << result.grad_steps
            << " gradient steps\n";
  if (!opts.checkpoint_path.empty()) std::cout << "checkpoint: " << opts.checkpoint_path << "\n";
  if (!opts.metrics_path.empty()) std::cout << "metrics: " << opts.metrics_path << "\n";
  return 0;
}

double exact_oracle_cost(const Instance& inst) {
  if (inst.is_cvrp()) {
    if (inst.num_customers() > 8)
      throw std::invalid_argument(
          "exact CVRP reference needs <= 8 customers; rerun with smaller instances");
    return brute_force_cvrp(inst).cost;
  }
  if (inst.n() > 16)
    throw std::invalid_argument("exact TSP reference needs n <= 16; rerun with smaller instances");
  return held_karp_tsp(inst).cost;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.instances_path.empty()) throw std::invalid_argument("eval requires --instances");
  const std::vector<Instance> instances = read_instances_jsonl(cfg.instances_path);
  if (instances.empty()) throw std::invalid_argument("instance file is empty");

  std::unique_ptr<Policy> policy;
  if (cfg.policy == "checkpoint") {
    if (cfg.checkpoint_path.empty())
      throw std::invalid_argument("eval with --policy checkpoint requires --checkpoint");
    policy = std::make_unique<Policy>(Policy::load(cfg.checkpoint_path));
    policy->backbone();  // warm up before any thread fan-out
  } else if (cfg.policy != "oracle" && cfg.policy != "nearest" && cfg.policy != "nn2opt") {
    throw std::invalid_argument("unknown policy: " + cfg.policy);
  }
  if ((cfg.policy == "nearest" || cfg.policy == "nn2opt") && instances[0].is_cvrp())
    throw std::invalid_argument("tour heuristics support TSP instances only");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GapReport> reports(instances.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < instances.size(); i = next.fetch_add(1)) {
      const Instance& inst = instances[i];
      double method_cost = 0.0;
      if (cfg.policy == "checkpoint") {
        method_cost = solve(*policy, inst, cfg.augment).cost;
      } else if (cfg.policy == "oracle") {
        method_cost = exact_oracle_cost(inst);
      } else {
        Tour tour = nearest_neighbor(inst);
        if (cfg.policy == "nn2opt") tour = two_opt(inst, tour);
        method_cost = tour_cost(inst, tour);
      }
      reports[i] = make_gap_report(inst.id(), method_cost, exact_oracle_cost(inst));
    }
  };
  if (cfg.jobs > 1) {
    std::vector<std::thread> threads;
    for (int t = 0; t < cfg.jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  } else {
    worker();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double mean_cost = 0.0, mean_gap = 0.0;
  for (const GapReport& r : reports) {
    mean_cost += r.method_cost;
    mean_gap += r.gap;
  }
  mean_cost /= static_cast<double>(reports.size());
  mean_gap /= static_cast<double>(reports.size());

  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path);
    if (!out) throw std::runtime_error("cannot open report for writing: " + cfg.out_path);
    write_gap_csv(out, reports);
  }
  std::cout << "instances " << reports.size() << "  policy " << cfg.policy << "  augment "
            << (cfg.augment ? "on" : "off") << "\n";
  std::printf("mean_cost %.6f  mean_gap %.4f%%  wall_s %.3f\n", mean_cost, 100.0 * mean_gap, wall);
  if (!cfg.out_path.empty()) std::cout << "report: " << cfg.out_path << "\n";
  return 0;
}

int cmd_solve(const RunConfig& cfg, int index) {
  if (cfg.checkpoint_path.empty()) throw std::invalid_argument("solve requires --checkpoint");
  if (cfg.instances_path.empty()) throw std::invalid_argument("solve requires --instances");
  const std::vector<Instance> instances = read_instances_jsonl(cfg.instances_path);
  if (instances.empty()) throw std::invalid_argument("instance file is empty");
  if (index < 0 || index >= static_cast<int>(instances.size()))
    throw std::invalid_argument("instance index out of range");
  const Instance& inst = instances[static_cast<std::size_t>(index)];

  Policy policy = Policy::load(cfg.checkpoint_path);
  const SolveResult result = solve(policy, inst, cfg.augment);

  SolutionRecord rec;
  rec.instance_id = inst.id();
  rec.cost = result.cost;
  rec.augmented = result.augmented;
  rec.wall_time_s = result.wall_time_s;
  if (inst.is_cvrp()) {
    const ValidationReport report = validate_routes(inst, result.routes);
    if (!report.ok()) throw std::logic_error("solver produced invalid routes:\n" + report.to_string());
    rec.routes = result.routes.routes;
  } else {
    const ValidationReport report = validate_tour(inst, result.tour);
    if (!report.ok()) throw std::logic_error("solver produced invalid tour:\n" + report.to_string());
    rec.tour = result.tour.order;
  }
  const std::string line = solution_to_json(rec).dump();
  std::cout << line << "\n";
  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path);
    if (!out) throw std::runtime_error("cannot open solution file for writing: " + cfg.out_path);
    out << line << "\n";
  }
  return 0;
}

int cmd_rasterize(const RunConfig& cfg) {
  if (cfg.instances_path.empty()) throw std::invalid_argument("rasterize requires --instances");
  if (cfg.out_path.empty()) throw std::invalid_argument("rasterize requires --out directory");
  const std::vector<Instance> instances = read_instances_jsonl(cfg.instances_path);
  std::filesystem::create_directories(cfg.out_path);
  const long long cells = static_cast<long long>(kRasterSize) * kRasterSize;
  for (const Instance& inst : instances) {
    const RasterImage image = rasterize(inst);
    const std::string path = cfg.out_path + "/" + inst.id() + ".pfm";
    write_pfm(image, path);
    int nonzero = 0;
    for (int r = 0; r < image.height; ++r)
      for (int c = 0; c < image.width; ++c)
        if (image.at(r, c, 0) != 0.0f || image.at(r, c, 1) != 0.0f || image.at(r, c, 2) != 0.0f)
          ++nonzero;
    const double p = pixel_collision_prob(inst.n(), cells);
    const double big_p = at_most_one_collision_prob(inst.n(), cells);
    std::printf("%s  pixels=%d  p_collision=%.6e  p_at_most_one=%.6f  -> %s\n", inst.id().c_str(),
                nonzero, p, big_p, path.c_str());
  }
  std::printf("reference: n=100 over %lld cells -> p_at_most_one=%.6f (exceeds 0.99)\n", cells,
              at_most_one_collision_prob(100, cells));
  return 0;
}

int cmd_plot(const RunConfig& cfg, const std::vector<std::string>& metrics_files) {
  if (metrics_files.empty()) throw std::invalid_argument("plot requires at least one metrics file");
  if (cfg.out_path.empty()) throw std::invalid_argument("plot requires --out");
  std::vector<std::pair<std::string, std::vector<MetricsRow>>> series;
  for (const std::string& path : metrics_files) {
    std::vector<MetricsRow> rows = read_metrics_jsonl(path);
    if (rows.empty()) throw std::invalid_argument("metrics file has no rows: " + path);
    series.emplace_back(std::filesystem::path(path).stem().string(), std::move(rows));
  }
  write_training_plot_svg(cfg.out_path, series);
  std::size_t points = 0;
  for (const auto& [name, rows] : series) points += rows.size();
  std::cout << "wrote " << series.size() << " curve(s), " << points << " points to "
            << cfg.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vagpo: vision-augmented routing solver"};
  app.require_subcommand(1);

  FlagSet gen_f, train_f, eval_f, solve_f, raster_f, plot_f;

  CLI::App* gen = app.add_subcommand("generate", "write random instances to a JSONL file");
  add_shared(gen, gen_f);
  gen->add_option("--problem", gen_f.problem, "tsp or cvrp");
  gen->add_option("--n", gen_f.n, "nodes (TSP) or customers (CVRP)");
  gen->add_option("--capacity", gen_f.capacity, "CVRP capacity; 0 picks the size default");
  gen->add_option("--count", gen_f.count, "number of instances");

  CLI::App* train = app.add_subcommand("train", "train a policy");
  add_shared(train, train_f);
  train->add_option("--problem", train_f.problem, "tsp or cvrp");
  train->add_option("--n", train_f.n, "instance size");
  train->add_option("--capacity", train_f.capacity, "CVRP capacity");
  train->add_option("--preset", train_f.preset, "model preset: default|small|tiny");
  train->add_option("--backbone", train_f.backbone, "resnet18 or none");
  train->add_option("--backbone-weights", train_f.backbone_weights, "backbone weight file");
  train->add_option("--optimizer", train_f.optimizer, "agpo or reinforce");
  train->add_option("--steps", train_f.steps, "outer steps");
  train->add_option("--batch-size", train_f.batch_size, "instances per outer step");
  train->add_option("--inner-iters", train_f.inner_iters, "gradient iterations per batch");
  train->add_option("--top-k", train_f.top_k, "preference group size");
  train->add_option("--beta-w", train_f.beta_w, "preferred-group coefficient");
  train->add_option("--beta-l", train_f.beta_l, "non-preferred-group coefficient");
  train->add_option("--lr", train_f.lr, "learning rate");
  train->add_option("--weight-decay", train_f.weight_decay, "weight decay");
  train->add_option("--ref-refresh", train_f.ref_refresh, "reference refresh interval");
  train->add_flag("--resample", train_f.resample,
                  "resample trajectories each inner iteration instead of re-scoring stored ones");
  train->add_flag("--ref-greedy", train_f.ref_greedy,
                  "collect reference rollouts greedily instead of sampling");
  train->add_option("--pool-size", train_f.pool_size, "training instance pool size");
  train->add_option("--val-instances", train_f.val_instances, "held-out validation instances");
  train->add_option("--val-n", train_f.val_n, "validation instance size (0 = training size)");
  train->add_option("--eval-interval", train_f.eval_interval, "steps between validation passes");
  train->add_option("--max-wall-time", train_f.max_wall_time, "stop after this many seconds");
  train->add_option("--target-val-gap", train_f.target_val_gap, "stop once gap reaches this");
  train->add_option("--max-grad-steps", train_f.max_grad_steps, "stop after this many updates");
  train->add_option("--metrics", train_f.metrics, "metrics JSONL output path");
  train->add_option("--checkpoint", train_f.checkpoint, "checkpoint output path");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a policy against exact oracles");
  add_shared(eval, eval_f);
  eval->add_option("--instances", eval_f.instances, "instance JSONL file")->required();
  eval->add_option("--checkpoint", eval_f.checkpoint, "checkpoint file");
  eval->add_option("--policy", eval_f.policy, "checkpoint|oracle|nearest|nn2opt");
  eval->add_flag("--augment", eval_f.augment, "x8 test-time augmentation");
  eval->add_flag("--no-augment", eval_f.no_augment, "disable augmentation");

  CLI::App* solve_cmd = app.add_subcommand("solve", "solve one instance from a file");
  add_shared(solve_cmd, solve_f);
  solve_cmd->add_option("--instances", solve_f.instances, "instance JSONL file")->required();
  solve_cmd->add_option("--checkpoint", solve_f.checkpoint, "checkpoint file")->required();
  solve_cmd->add_option("--index", solve_f.index, "instance row to solve (0-based)");
  solve_cmd->add_flag("--augment", solve_f.augment, "x8 test-time augmentation");
  solve_cmd->add_flag("--no-augment", solve_f.no_augment, "disable augmentation");

  CLI::App* raster = app.add_subcommand("rasterize", "export instance rasters and collision stats");
  add_shared(raster, raster_f);
  raster->add_option("--instances", raster_f.instances, "instance JSONL file")->required();

  CLI::App* plot = app.add_subcommand("plot", "render training curves to SVG");
  add_shared(plot, plot_f);
  plot->add_option("files", plot_f.metrics_files, "metrics JSONL files");
  plot->add_option("--metrics", plot_f.metrics, "metrics JSONL file (alternative to positional)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(merge_config(gen, gen_f));
    if (train->parsed()) return cmd_train(merge_config(train, train_f));
    if (eval->parsed()) return cmd_eval(merge_config(eval, eval_f));
    if (solve_cmd->parsed()) return cmd_solve(merge_config(solve_cmd, solve_f), solve_f.index);
    if (raster->parsed()) return cmd_rasterize(merge_config(raster, raster_f));
    if (plot->parsed()) {
      std::vector<std::string> files = plot_f.metrics_files;
      if (!plot_f.metrics.empty()) files.push_back(plot_f.metrics);
      return cmd_plot(merge_config(plot, plot_f), files);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
