// Command-line front end: train policies, run planner comparisons, export
// replay CSVs, and emit SVG figures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <rpf/eval.hpp>
#include <rpf/ppo.hpp>
#include <rpf/scenario.hpp>
#include <rpf/svg_plot.hpp>
#include <rpf/trace_io.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  rpf::WorldConfig world;
  rpf::PpoConfig ppo;
  rpf::NetArch arch;
  rpf::SampleOptions sample;
  rpf::apf::Config apf;
};

// Config file: JSON object with optional "world", "ppo", "arch", "sample"
// sections; flags override file values, file values override defaults.
RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed config file " + path + ": " + e.what());
  }
  if (j.contains("world")) rc.world = rpf::world_config_from_json(j["world"]);
  if (j.contains("ppo")) {
    const json& p = j["ppo"];
    rc.ppo.clip = p.value("clip", rc.ppo.clip);
    rc.ppo.gamma = p.value("gamma", rc.ppo.gamma);
    rc.ppo.gae_tau = p.value("tau", rc.ppo.gae_tau);
    rc.ppo.value_coef = p.value("value_coef", rc.ppo.value_coef);
    rc.ppo.entropy_coef = p.value("entropy_coef", rc.ppo.entropy_coef);
    rc.ppo.lr_init = p.value("lr_init", rc.ppo.lr_init);
    rc.ppo.lr_decay = p.value("lr_decay", rc.ppo.lr_decay);
    rc.ppo.batch_interval = p.value("batch_interval", rc.ppo.batch_interval);
    rc.ppo.epochs = p.value("epochs", rc.ppo.epochs);
    rc.ppo.episodes = p.value("episodes", rc.ppo.episodes);
    rc.ppo.checkpoint_every = p.value("checkpoint_every", rc.ppo.checkpoint_every);
  }
  if (j.contains("arch")) {
    const json& a = j["arch"];
    rc.arch.embed_dim = a.value("embed_dim", rc.arch.embed_dim);
    if (a.contains("hidden")) rc.arch.hidden = a["hidden"].get<std::vector<int>>();
  }
  if (j.contains("sample")) {
    const json& s = j["sample"];
    rc.sample.circle_radius = s.value("circle_radius", rc.sample.circle_radius);
    rc.sample.obstacle_count = s.value("obstacle_count", rc.sample.obstacle_count);
    rc.sample.obstacle_radius_lo = s.value("obstacle_radius_lo", rc.sample.obstacle_radius_lo);
    rc.sample.obstacle_radius_hi = s.value("obstacle_radius_hi", rc.sample.obstacle_radius_hi);
    rc.sample.min_start_goal_dist = s.value("min_start_goal_dist", rc.sample.min_start_goal_dist);
    if (s.contains("arena")) {
      rc.sample.arena_min = {s["arena"].at("min").at(0).get<double>(),
                             s["arena"].at("min").at(1).get<double>()};
      rc.sample.arena_max = {s["arena"].at("max").at(0).get<double>(),
                             s["arena"].at("max").at(1).get<double>()};
    }
  }
  if (j.contains("apf")) {
    const json& a = j["apf"];
    rc.apf.rho = a.value("rho", rc.apf.rho);
    rc.apf.f_in_threshold = a.value("f_in_threshold", rc.apf.f_in_threshold);
    rc.apf.wall_following = a.value("wall_following", rc.apf.wall_following);
    rc.apf.soft_rule = a.value("soft_rule", rc.apf.soft_rule);
  }
  return rc;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& scenario_path, const std::string& kind_name, int n_robots,
              int episodes, std::uint64_t seed, const std::string& control_name,
              const std::string& embed_name, const CLI::App* cmd) {
  if (control_name != "steer" && control_name != "apf")
    throw std::runtime_error("unknown control mode: " + control_name);
  if (embed_name != "mean_pool" && embed_name != "attention")
    throw std::runtime_error("unknown embed mode: " + embed_name);

  RunConfig rc = load_run_config(config_path);
  if (cmd->count("--episodes") || config_path.empty()) rc.ppo.episodes = episodes;

  rpf::TrainSetup setup;
  setup.world = rc.world;
  setup.ppo = rc.ppo;
  setup.arch = rc.arch;
  setup.sample = rc.sample;
  setup.apf_config = rc.apf;
  setup.kind = rpf::scenario_kind_from_string(kind_name);
  setup.n_robots = n_robots;
  setup.seed = seed;
  setup.control =
      control_name == "steer" ? rpf::ControlMode::steer : rpf::ControlMode::apf_gains;
  setup.embed_mode =
      embed_name == "mean_pool" ? rpf::EmbedMode::mean_pool : rpf::EmbedMode::attention;
  setup.arch.action_dim = setup.control == rpf::ControlMode::steer ? 1 : 2;

  // Validate every input before creating any artifact.
  setup.world.validate();
  setup.ppo.validate();
  if (!scenario_path.empty()) {
    setup.fixed_scenario = rpf::load_scenario(scenario_path);
    rpf::World probe(setup.world, *setup.fixed_scenario);
  } else {
    rpf::sample_scenario(setup.kind, setup.n_robots, seed, setup.world.safe_radius, setup.sample);
  }

  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "training_log.csv").string();
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write training log: " + log_path);
  log << rpf::training_log_header();

  auto checkpoint_sink = [&](const rpf::Checkpoint& cp) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", cp.episode);
    rpf::save_checkpoint(cp, (fs::path(out_dir) / name).string());
    rpf::save_checkpoint(cp, (fs::path(out_dir) / "checkpoint.bin").string());
  };
  auto episode_sink = [&](const rpf::EpisodeLog& row) {
    log << rpf::training_log_row(row);
    log.flush();
    std::printf("episode %d return %.2f success %.2f collisions %.2f steps %d\n", row.episode,
                row.return_mean, row.success_rate, row.collision_rate, row.steps);
  };

  rpf::train(setup, checkpoint_sink, episode_sink);
  std::printf("training complete: %s\n", out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& planners_csv, const std::string& checkpoint_path,
             const std::string& steer_checkpoint_path, const std::string& scenario_path,
             const std::string& kind_name, int n_robots, int n_seeds, std::uint64_t seed_base,
             const std::string& out_dir, bool no_wall_following, bool no_soft,
             const std::string& config_path) {
  RunConfig rc = load_run_config(config_path);
  rc.apf.wall_following = !no_wall_following;
  rc.apf.soft_rule = !no_soft;

  std::vector<rpf::Planner> planners;
  std::string item;
  std::istringstream ss(planners_csv);
  while (std::getline(ss, item, ',')) {
    const rpf::PlannerKind kind = rpf::planner_kind_from_string(item);
    if (kind == rpf::PlannerKind::vanilla_apf) {
      planners.push_back(rpf::Planner::vanilla_apf(rc.apf));
      continue;
    }
    const std::string& path =
        kind == rpf::PlannerKind::ppo_steer ? steer_checkpoint_path : checkpoint_path;
    if (path.empty() || !fs::exists(path))
      throw std::runtime_error("planner " + item + " needs an existing checkpoint (got '" +
                               path + "')");
    rpf::Planner p = rpf::Planner::from_checkpoint(rpf::load_checkpoint(path), rc.apf);
    if (p.kind != kind)
      throw std::runtime_error("checkpoint at " + path + " holds a " + to_string(p.kind) +
                               " policy, not " + item);
    planners.push_back(std::move(p));
  }
  if (planners.empty()) throw std::runtime_error("no planners requested");

  fs::create_directories(out_dir);
  std::vector<rpf::ComparisonRow> rows;
  if (!scenario_path.empty()) {
    const rpf::Scenario scenario = rpf::load_scenario(scenario_path);
    for (const rpf::Planner& p : planners) {
      const rpf::EpisodeTrace trace = rpf::run_episode(scenario, p, rc.world);
      const rpf::MetricsReport m = rpf::compute_metrics(trace);
      rpf::ComparisonRow row;
      row.planner = to_string(p.kind);
      row.scenario = scenario_path;
      row.seed = 0;
      row.distance = m.distance_mean;
      row.smoothness = m.smoothness;
      row.success_rate = m.success_rate;
      row.collisions = static_cast<int>(std::lround(m.collision_rate * trace.robots.size()));
      row.steps = trace.steps;
      row.status = m.partial ? "partial" : "ok";
      rows.push_back(row);
      rpf::save_trace(trace,
                      (fs::path(out_dir) / ("trace_" + to_string(p.kind) + ".json")).string());
    }
  } else {
    const rpf::ScenarioKind kind = rpf::scenario_kind_from_string(kind_name);
    rows = rpf::compare(planners, kind, n_robots, n_seeds, seed_base, rc.world, rc.sample);
    // Per-episode traces for the first seed of each planner.
    for (const rpf::Planner& p : planners) {
      const std::uint64_t seed = rpf::Rng::derive(seed_base, 0);
      const rpf::Scenario scenario =
          rpf::sample_scenario(kind, n_robots, seed, rc.world.safe_radius, rc.sample);
      const rpf::EpisodeTrace trace = rpf::run_episode(scenario, p, rc.world);
      rpf::save_trace(trace,
                      (fs::path(out_dir) / ("trace_" + to_string(p.kind) + ".json")).string());
    }
  }

  const std::string csv = rpf::comparison_to_csv(rows);
  const std::string csv_path = (fs::path(out_dir) / "comparison.csv").string();
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("cannot write comparison CSV: " + csv_path);
  f << csv;

  for (const rpf::PlannerSummary& s : rpf::summarize(rows)) {
    std::printf("%-16s episodes %d  l %.3f +- %.3f  xi %.4f +- %.4f  success %.2f\n",
                s.planner.c_str(), s.episodes, s.distance_mean, s.distance_std,
                s.smoothness_mean, s.smoothness_std, s.success_mean);
  }
  std::printf("comparison written: %s\n", csv_path.c_str());
  return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& out_path) {
  const rpf::EpisodeTrace trace = rpf::load_trace(trace_path);
  const std::string csv = rpf::trace_to_replay_csv(trace);
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write replay CSV: " + out_path);
    f << csv;
  }
  return 0;
}

int cmd_plot(const std::string& input_path, const std::string& out_path) {
  std::string svg;
  if (input_path.size() > 4 && input_path.substr(input_path.size() - 4) == ".csv") {
    // Comparison CSV: parse the rows back.
    std::ifstream f(input_path);
    if (!f) throw std::runtime_error("cannot read comparison CSV: " + input_path);
    std::string line;
    std::getline(f, line);
    if (line.rfind("planner,scenario,seed", 0) != 0)
      throw std::runtime_error("not a comparison CSV: " + input_path);
    std::vector<rpf::ComparisonRow> rows;
    while (std::getline(f, line)) {
      std::istringstream ls(line);
      rpf::ComparisonRow row;
      std::string field;
      std::getline(ls, row.planner, ',');
      std::getline(ls, row.scenario, ',');
      std::getline(ls, field, ',');
      row.seed = std::stoull(field);
      std::getline(ls, field, ',');
      row.distance = std::stod(field);
      std::getline(ls, field, ',');
      row.smoothness = std::stod(field);
      std::getline(ls, field, ',');
      row.success_rate = std::stod(field);
      std::getline(ls, field, ',');
      row.collisions = std::stoi(field);
      std::getline(ls, field, ',');
      row.steps = std::stoi(field);
      std::getline(ls, row.status, ',');
      rows.push_back(std::move(row));
    }
    svg = rpf::comparison_to_svg(rows);
  } else {
    svg = rpf::trace_to_svg(rpf::load_trace(input_path));
  }
  rpf::save_svg(svg, out_path);
  std::printf("plot written: %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforced potential field planner: training, evaluation, and plotting"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a policy with parameter-shared PPO");
  std::string config_path, out_dir = "out", scenario_path, kind_name = "circle_swap";
  std::string control_name = "apf", embed_name = "attention";
  int n_robots = 6, episodes = 1000;
  std::uint64_t seed = 0;
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--scenario", scenario_path, "fixed scenario file (unsupported for training)");
  train->add_option("--kind", kind_name, "scenario kind: circle_swap | cluttered");
  train->add_option("--robots", n_robots, "number of robots");
  train->add_option("--episodes", episodes, "training episodes");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--control", control_name, "action space: apf | steer");
  train->add_option("--embed", embed_name, "embedding: attention | mean_pool");

  // eval
  auto* eval = app.add_subcommand("eval", "Compare planners over paired scenario seeds");
  std::string planners_csv = "vanilla_apf", checkpoint_path, steer_checkpoint_path;
  std::string eval_scenario, eval_kind = "circle_swap", eval_out = "out", eval_config;
  int eval_robots = 8, n_seeds = 10;
  std::uint64_t seed_base = 0;
  bool no_wall_following = false, no_soft = false;
  eval->add_option("--planners", planners_csv,
                   "comma list: rpf_attention,rpf_mean_embed,vanilla_apf,ppo_steer");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint for rpf_* planners");
  eval->add_option("--checkpoint-steer", steer_checkpoint_path, "checkpoint for ppo_steer");
  eval->add_option("--scenario", eval_scenario, "fixed scenario file instead of sampling");
  eval->add_option("--kind", eval_kind, "scenario kind when sampling");
  eval->add_option("--robots", eval_robots, "robots when sampling");
  eval->add_option("--seeds", n_seeds, "number of paired seeds");
  eval->add_option("--seed-base", seed_base, "base seed for the paired list");
  eval->add_option("--out", eval_out, "output directory");
  eval->add_option("--config", eval_config, "JSON config file");
  eval->add_flag("--no-wall-following", no_wall_following, "disable wall following");
  eval->add_flag("--no-soft", no_soft, "disable the soft wall-following rule");

  // replay
  auto* replay = app.add_subcommand("replay", "Export a trace file as flat CSV");
  std::string replay_trace, replay_out;
  replay->add_option("--trace", replay_trace, "trace JSON file")->required();
  replay->add_option("--out", replay_out, "output CSV (stdout when omitted)");

  // plot
  auto* plot = app.add_subcommand("plot", "Render a trace or comparison file as SVG");
  std::string plot_input, plot_out = "plot.svg";
  plot->add_option("--input", plot_input, "trace JSON or comparison CSV")->required();
  plot->add_option("--out", plot_out, "output SVG path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(config_path, out_dir, scenario_path, kind_name, n_robots, episodes, seed,
                       control_name, embed_name, train);
    if (eval->parsed())
      return cmd_eval(planners_csv, checkpoint_path, steer_checkpoint_path, eval_scenario,
                      eval_kind, eval_robots, n_seeds, seed_base, eval_out, no_wall_following,
                      no_soft, eval_config);
    if (replay->parsed()) return cmd_replay(replay_trace, replay_out);
    if (plot->parsed()) return cmd_plot(plot_input, plot_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
