#include "experior/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "experior/rng.hpp"

namespace experior {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

// Seed-derivation salts: fixed tags so every random stream is independent.
constexpr uint64_t kDistSalt = 0x64697374ULL;     // distribution generation
constexpr uint64_t kEntropySalt = 0x656e7472ULL;  // entropy Monte Carlo
constexpr uint64_t kDemoSalt = 0x64656d6fULL;     // demo generation
constexpr uint64_t kFitSalt = 0x666974ULL;        // prior fit reference draws
constexpr uint64_t kTaskSalt = 0x7461736bULL;     // per-cell task draw
constexpr uint64_t kAgentSalt = 0x6167656eULL;    // agent-internal stream
constexpr uint64_t kEnvSalt = 0x656e7655ULL;      // reward noise stream

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw std::runtime_error("config section '" + where +
                             "' must be a JSON object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::runtime_error("unknown config key '" + it.key() + "' in " +
                               where);
    }
  }
}

double beta_from_json(const json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kBetaInf;
    throw std::runtime_error("config key '" + where +
                             "' must be a number or \"inf\"");
  }
  if (!j.is_number()) {
    throw std::runtime_error("config key '" + where +
                             "' must be a number or \"inf\"");
  }
  return j.get<double>();
}

json beta_to_json(double beta) {
  if (std::isinf(beta)) return json("inf");
  return json(beta);
}

GoalDistributionKind goal_kind_from_string(const std::string& s) {
  if (s == "corner") return GoalDistributionKind::Corner;
  if (s == "right-quarter") return GoalDistributionKind::RightQuarter;
  if (s == "right-half") return GoalDistributionKind::RightHalf;
  if (s == "uniform") return GoalDistributionKind::Uniform;
  throw std::runtime_error("unknown goal distribution kind '" + s + "'");
}

std::vector<std::string> default_agents(const std::string& env_kind) {
  if (env_kind == "deepsea") return {"experior-bootdqn", "naive-bootdqn"};
  return {"experior-ts", "naive-ts",   "naive-ucb",
          "bc",          "oracle-ts",  "ucb-explore"};
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

std::string ExperimentConfig::to_json() const {
  json env;
  env["kind"] = env_kind;
  env["arms"] = num_arms;
  env["grid"] = grid_size;
  env["goals"] = goal_kinds;
  env["move_cost"] = move_cost;

  json exp;
  exp["episodes"] = episodes;
  exp["tasks_per_distribution"] = tasks_per_distribution;
  exp["seed"] = master_seed;
  exp["workers"] = workers;
  exp["entropy_mc_samples"] = entropy_mc_samples;

  json dist;
  dist["mode"] = distributions.mode;
  dist["count"] = distributions.count;
  dist["max_attempts"] = distributions.max_attempts;
  json params = json::array();
  for (const auto& arms : distributions.explicit_params) {
    json one = json::array();
    for (const auto& ab : arms) one.push_back({ab.first, ab.second});
    params.push_back(one);
  }
  dist["beta_params"] = params;

  json demos;
  demos["count"] = num_demos;
  demos["beta"] = beta_to_json(demo_beta);

  json prior;
  prior["lambda_star"] = fit.lambda_star;
  prior["beta_eff"] = fit.beta_eff;
  prior["reference_samples"] = fit.reference_samples;
  prior["iterations"] = fit.iterations;
  prior["step_size"] = fit.step_size;

  json sgld;
  sgld["step_size"] = agent.sgld.step_size;
  sgld["steps"] = agent.sgld.steps;
  sgld["thinning"] = agent.sgld.thinning;
  sgld["temperature"] = agent.sgld.temperature;

  json ag;
  ag["base_sigma"] = agent.base_sigma;
  ag["ensemble"] = agent.ensemble_size;
  ag["mask_rate"] = agent.mask_rate;
  ag["learning_rate"] = agent.learning_rate;
  ag["grad_steps"] = agent.grad_steps;
  ag["batch_size"] = agent.batch_size;
  ag["init_sigma"] = agent.init_sigma;
  ag["init_sgld_steps"] = agent.init_sgld_steps;
  ag["init_sgld_step_size"] = agent.init_sgld_step_size;
  ag["init_grad_clip"] = agent.init_grad_clip;
  ag["ts_burn_in_steps"] = agent.ts_burn_in_steps;
  ag["ts_burn_in_step_size"] = agent.ts_burn_in_step_size;

  json root;
  root["env"] = env;
  root["experiment"] = exp;
  root["distributions"] = dist;
  root["demos"] = demos;
  root["prior"] = prior;
  root["sgld"] = sgld;
  root["agents"] = agents;
  root["agent"] = ag;
  root["output"] = {{"dir", output_dir}};
  return root.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& json_text) {
  json root = json::parse(json_text);
  check_keys(root, "top level",
             {"env", "experiment", "distributions", "demos", "prior", "sgld",
              "agents", "agent", "output"});
  ExperimentConfig cfg;

  if (root.contains("env")) {
    const json& env = root["env"];
    check_keys(env, "env", {"kind", "arms", "grid", "goals", "move_cost"});
    if (env.contains("kind")) cfg.env_kind = env["kind"].get<std::string>();
    if (cfg.env_kind != "bandit" && cfg.env_kind != "deepsea") {
      throw std::runtime_error("env.kind must be 'bandit' or 'deepsea'");
    }
    if (env.contains("arms")) cfg.num_arms = env["arms"].get<int>();
    if (env.contains("grid")) cfg.grid_size = env["grid"].get<int>();
    if (env.contains("goals")) {
      cfg.goal_kinds = env["goals"].get<std::vector<std::string>>();
      for (const auto& g : cfg.goal_kinds) goal_kind_from_string(g);
    }
    if (env.contains("move_cost")) cfg.move_cost = env["move_cost"].get<double>();
  }

  if (root.contains("experiment")) {
    const json& exp = root["experiment"];
    check_keys(exp, "experiment",
               {"episodes", "tasks_per_distribution", "seed", "workers",
                "entropy_mc_samples"});
    if (exp.contains("episodes")) cfg.episodes = exp["episodes"].get<int>();
    if (exp.contains("tasks_per_distribution")) {
      cfg.tasks_per_distribution = exp["tasks_per_distribution"].get<int>();
    }
    if (exp.contains("seed")) cfg.master_seed = exp["seed"].get<uint64_t>();
    if (exp.contains("workers")) cfg.workers = exp["workers"].get<int>();
    if (exp.contains("entropy_mc_samples")) {
      cfg.entropy_mc_samples = exp["entropy_mc_samples"].get<int>();
    }
  }

  if (root.contains("distributions")) {
    const json& dist = root["distributions"];
    check_keys(dist, "distributions",
               {"mode", "count", "max_attempts", "beta_params"});
    if (dist.contains("mode")) {
      cfg.distributions.mode = dist["mode"].get<std::string>();
      const std::string& m = cfg.distributions.mode;
      if (m != "flat" && m != "per-bin" && m != "explicit") {
        throw std::runtime_error(
            "distributions.mode must be 'flat', 'per-bin' or 'explicit'");
      }
    }
    if (dist.contains("count")) {
      cfg.distributions.count = dist["count"].get<int>();
    }
    if (dist.contains("max_attempts")) {
      cfg.distributions.max_attempts = dist["max_attempts"].get<int>();
    }
    if (dist.contains("beta_params")) {
      for (const json& one : dist["beta_params"]) {
        std::vector<std::pair<double, double>> arms;
        for (const json& ab : one) {
          if (!ab.is_array() || ab.size() != 2) {
            throw std::runtime_error(
                "distributions.beta_params entries must be [a, b] pairs");
          }
          arms.emplace_back(ab[0].get<double>(), ab[1].get<double>());
        }
        cfg.distributions.explicit_params.push_back(std::move(arms));
      }
    }
  }

  if (root.contains("demos")) {
    const json& demos = root["demos"];
    check_keys(demos, "demos", {"count", "beta"});
    if (demos.contains("count")) cfg.num_demos = demos["count"].get<int>();
    if (demos.contains("beta")) {
      cfg.demo_beta = beta_from_json(demos["beta"], "demos.beta");
    }
  }

  if (root.contains("prior")) {
    const json& prior = root["prior"];
    check_keys(prior, "prior",
               {"lambda_star", "beta_eff", "reference_samples", "iterations",
                "step_size"});
    if (prior.contains("lambda_star")) {
      cfg.fit.lambda_star = prior["lambda_star"].get<double>();
    }
    if (prior.contains("beta_eff")) {
      cfg.fit.beta_eff = prior["beta_eff"].get<double>();
    }
    if (prior.contains("reference_samples")) {
      cfg.fit.reference_samples = prior["reference_samples"].get<int>();
    }
    if (prior.contains("iterations")) {
      cfg.fit.iterations = prior["iterations"].get<int>();
    }
    if (prior.contains("step_size")) {
      cfg.fit.step_size = prior["step_size"].get<double>();
    }
  }

  if (root.contains("sgld")) {
    const json& sgld = root["sgld"];
    check_keys(sgld, "sgld", {"step_size", "steps", "thinning", "temperature"});
    if (sgld.contains("step_size")) {
      cfg.agent.sgld.step_size = sgld["step_size"].get<double>();
    }
    if (sgld.contains("steps")) cfg.agent.sgld.steps = sgld["steps"].get<int>();
    if (sgld.contains("thinning")) {
      cfg.agent.sgld.thinning = sgld["thinning"].get<int>();
    }
    if (sgld.contains("temperature")) {
      cfg.agent.sgld.temperature = sgld["temperature"].get<double>();
    }
  }

  if (root.contains("agents")) {
    cfg.agents = root["agents"].get<std::vector<std::string>>();
  }

  if (root.contains("agent")) {
    const json& ag = root["agent"];
    check_keys(ag, "agent",
               {"base_sigma", "ensemble", "mask_rate", "learning_rate",
                "grad_steps", "batch_size", "init_sigma", "init_sgld_steps",
                "init_sgld_step_size", "init_grad_clip", "ts_burn_in_steps",
                "ts_burn_in_step_size"});
    if (ag.contains("base_sigma")) {
      cfg.agent.base_sigma = ag["base_sigma"].get<double>();
    }
    if (ag.contains("ensemble")) {
      cfg.agent.ensemble_size = ag["ensemble"].get<int>();
    }
    if (ag.contains("mask_rate")) {
      cfg.agent.mask_rate = ag["mask_rate"].get<double>();
    }
    if (ag.contains("learning_rate")) {
      cfg.agent.learning_rate = ag["learning_rate"].get<double>();
    }
    if (ag.contains("grad_steps")) {
      cfg.agent.grad_steps = ag["grad_steps"].get<int>();
    }
    if (ag.contains("batch_size")) {
      cfg.agent.batch_size = ag["batch_size"].get<int>();
    }
    if (ag.contains("init_sigma")) {
      cfg.agent.init_sigma = ag["init_sigma"].get<double>();
    }
    if (ag.contains("init_sgld_steps")) {
      cfg.agent.init_sgld_steps = ag["init_sgld_steps"].get<int>();
    }
    if (ag.contains("init_sgld_step_size")) {
      cfg.agent.init_sgld_step_size = ag["init_sgld_step_size"].get<double>();
    }
    if (ag.contains("init_grad_clip")) {
      cfg.agent.init_grad_clip = ag["init_grad_clip"].get<double>();
    }
    if (ag.contains("ts_burn_in_steps")) {
      cfg.agent.ts_burn_in_steps = ag["ts_burn_in_steps"].get<int>();
    }
    if (ag.contains("ts_burn_in_step_size")) {
      cfg.agent.ts_burn_in_step_size = ag["ts_burn_in_step_size"].get<double>();
    }
  }

  if (root.contains("output")) {
    const json& out = root["output"];
    check_keys(out, "output", {"dir"});
    if (out.contains("dir")) cfg.output_dir = out["dir"].get<std::string>();
  }

  if (cfg.agents.empty()) cfg.agents = default_agents(cfg.env_kind);

  if (cfg.episodes <= 0) throw std::runtime_error("episodes must be positive");
  if (cfg.tasks_per_distribution <= 0) {
    throw std::runtime_error("tasks_per_distribution must be positive");
  }
  if (cfg.num_arms < 2 && cfg.env_kind == "bandit") {
    throw std::runtime_error("bandit needs at least 2 arms");
  }
  if (cfg.grid_size < 2 && cfg.env_kind == "deepsea") {
    throw std::runtime_error("deep sea needs grid size >= 2");
  }
  if (cfg.workers < 1) throw std::runtime_error("workers must be >= 1");
  if (cfg.num_demos < 0) throw std::runtime_error("demos.count must be >= 0");
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Parallel execution
// ---------------------------------------------------------------------------

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int threads = std::min(std::max(workers, 1), n);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error = nullptr;
  std::mutex error_mutex;
  auto body = [&]() {
    while (true) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Bandit suite
// ---------------------------------------------------------------------------

std::string entropy_bin(double entropy) {
  if (entropy < 0.8) return "low";
  if (entropy > 1.6) return "high";
  return "medium";
}

RegretReport run_bandit_suite(const ExperimentConfig& cfg) {
  if (cfg.env_kind != "bandit") {
    throw std::runtime_error("run_bandit_suite needs env.kind == 'bandit'");
  }
  const int num_arms = cfg.num_arms;
  const uint64_t master = cfg.master_seed;

  // 1. Task distributions plus their entropy estimates.
  std::vector<TaskDistribution> dists;
  std::vector<DistributionInfo> infos;
  auto add_dist = [&](TaskDistribution d, const std::string& label,
                      uint64_t entropy_key) {
    double h = optimal_action_entropy(d, cfg.entropy_mc_samples,
                                      mix_seed({master, kEntropySalt,
                                                entropy_key}));
    DistributionInfo info;
    info.id = static_cast<int>(dists.size());
    info.label = label;
    info.entropy = h;
    dists.push_back(std::move(d));
    infos.push_back(std::move(info));
  };

  const DistributionsConfig& dc = cfg.distributions;
  if (dc.mode == "explicit") {
    if (dc.explicit_params.empty()) {
      throw std::runtime_error(
          "distributions.mode == 'explicit' needs beta_params");
    }
    for (size_t i = 0; i < dc.explicit_params.size(); ++i) {
      if (static_cast<int>(dc.explicit_params[i].size()) != num_arms) {
        throw std::runtime_error(
            "beta_params entry does not match the arm count");
      }
      add_dist(TaskDistribution::beta_product(dc.explicit_params[i]),
               "explicit-" + std::to_string(i), static_cast<uint64_t>(i));
    }
  } else if (dc.mode == "flat") {
    Rng rng = make_rng({master, kDistSalt});
    for (int i = 0; i < dc.count; ++i) {
      add_dist(sample_beta_product_distribution(num_arms, rng),
               "beta-product-" + std::to_string(i), static_cast<uint64_t>(i));
    }
  } else if (dc.mode == "per-bin") {
    Rng rng = make_rng({master, kDistSalt});
    std::map<std::string, int> filled{{"low", 0}, {"medium", 0}, {"high", 0}};
    for (int attempt = 0; attempt < dc.max_attempts; ++attempt) {
      bool done = true;
      for (const auto& kv : filled) done = done && kv.second >= dc.count;
      if (done) break;
      TaskDistribution cand = sample_beta_product_distribution(num_arms, rng);
      double h = optimal_action_entropy(cand, cfg.entropy_mc_samples,
                                        mix_seed({master, kEntropySalt,
                                                  static_cast<uint64_t>(
                                                      attempt)}));
      std::string bin = entropy_bin(h);
      if (filled[bin] >= dc.count) continue;
      ++filled[bin];
      DistributionInfo info;
      info.id = static_cast<int>(dists.size());
      info.label = bin + "-" + std::to_string(filled[bin] - 1);
      info.entropy = h;
      dists.push_back(std::move(cand));
      infos.push_back(std::move(info));
    }
    for (const auto& kv : filled) {
      if (kv.second < dc.count) {
        throw std::runtime_error("could not fill entropy bin '" + kv.first +
                                 "' within max_attempts");
      }
    }
  } else {
    throw std::runtime_error("unknown distributions.mode: " + dc.mode);
  }

  const int num_dists = static_cast<int>(dists.size());
  const int tasks = cfg.tasks_per_distribution;
  const int num_agents = static_cast<int>(cfg.agents.size());
  const int episodes = cfg.episodes;
  if (num_agents == 0) throw std::runtime_error("no agents configured");

  // 2. One demo set and one fitted prior per distribution.
  auto model = make_q_model(EnvSignature::bandit(num_arms));
  std::vector<DemoDataset> demo_sets(num_dists);
  std::vector<std::shared_ptr<const GibbsPrior>> priors(num_dists);
  parallel_for(num_dists, cfg.workers, [&](int d) {
    demo_sets[d] =
        generate_demos(dists[d], cfg.demo_beta, cfg.num_demos,
                       mix_seed({master, kDemoSalt, static_cast<uint64_t>(d)}));
    FitOptions opts = cfg.fit;
    opts.beta = cfg.demo_beta;
    opts.seed = mix_seed({master, kFitSalt, static_cast<uint64_t>(d)});
    FitResult fit = fit_prior(demo_sets[d], make_uniform_box_sampler(num_arms),
                              model, opts);
    priors[d] = std::make_shared<GibbsPrior>(std::move(fit.prior));
  });

  // 3. Task draws, shared by every agent within a (distribution, task) cell.
  std::vector<std::vector<TaskParam>> thetas(num_dists);
  for (int d = 0; d < num_dists; ++d) {
    thetas[d].resize(tasks);
    for (int j = 0; j < tasks; ++j) {
      Rng rng = make_rng({master, kTaskSalt, static_cast<uint64_t>(d),
                          static_cast<uint64_t>(j)});
      thetas[d][j] = sample_task(dists[d], rng);
    }
  }

  // 4. Run the cells.
  const int num_cells = num_dists * tasks * num_agents;
  RegretReport report;
  report.distributions = infos;
  report.records.resize(static_cast<size_t>(num_cells) * episodes);
  std::vector<double> identity_gaps(num_cells, 0.0);

  parallel_for(num_cells, cfg.workers, [&](int c) {
    const int d = c / (tasks * num_agents);
    const int rem = c % (tasks * num_agents);
    const int j = rem / num_agents;
    const int a = rem % num_agents;
    const std::string& kind = cfg.agents[a];
    const uint64_t cell_seed = mix_seed(
        {master, static_cast<uint64_t>(d), static_cast<uint64_t>(j),
         fnv1a64(kind)});
    std::unique_ptr<Agent> agent = make_bandit_agent(
        kind, num_arms, priors[d], &dists[d], &demo_sets[d], cfg.agent,
        mix_seed({cell_seed, kAgentSalt}));
    Rng env_rng = make_rng({cell_seed, kEnvSalt});

    const TaskParam& theta = thetas[d][j];
    const double best =
        *std::max_element(theta.values.begin(), theta.values.end());
    double regret_sum = 0.0;
    double mean_sum = 0.0;
    RegretRecord* out = report.records.data() +
                        static_cast<size_t>(c) * episodes;
    for (int t = 0; t < episodes; ++t) {
      agent->begin_episode();
      const int arm = agent->act(0);
      if (arm < 0 || arm >= num_arms) {
        throw std::runtime_error("agent '" + kind +
                                 "' chose an out-of-range arm");
      }
      const double r = bernoulli_pull(theta, arm, env_rng);
      Transition tr;
      tr.state = 0;
      tr.action = arm;
      tr.reward = r;
      tr.next_state = 0;
      tr.terminal = true;
      agent->observe(tr);
      agent->end_episode();

      RegretRecord& rec = out[t];
      rec.algo = kind;
      rec.task_dist_id = d;
      rec.task_id = j;
      rec.seed = cell_seed;
      rec.episode = t;
      rec.reward = r;
      rec.instant_regret = best - theta.values[arm];
      regret_sum += rec.instant_regret;
      mean_sum += theta.values[arm];
    }
    identity_gaps[c] =
        std::fabs(regret_sum - (episodes * best - mean_sum));
  });

  report.max_regret_identity_gap =
      identity_gaps.empty()
          ? 0.0
          : *std::max_element(identity_gaps.begin(), identity_gaps.end());
  report.config_digest = hex64(fnv1a64(cfg.to_json()));
  report.version = kVersion;
  return report;
}

// ---------------------------------------------------------------------------
// Deep Sea suite
// ---------------------------------------------------------------------------

RegretReport run_deepsea_suite(const ExperimentConfig& cfg) {
  if (cfg.env_kind != "deepsea") {
    throw std::runtime_error("run_deepsea_suite needs env.kind == 'deepsea'");
  }
  const int grid = cfg.grid_size;
  const uint64_t master = cfg.master_seed;
  const int tasks = cfg.tasks_per_distribution;  // independent seeds
  const int num_agents = static_cast<int>(cfg.agents.size());
  const int episodes = cfg.episodes;
  if (num_agents == 0) throw std::runtime_error("no agents configured");
  if (cfg.goal_kinds.empty()) {
    throw std::runtime_error("deep sea needs at least one goal kind");
  }

  const int num_dists = static_cast<int>(cfg.goal_kinds.size());
  std::vector<TaskDistribution> dists;
  std::vector<DistributionInfo> infos;
  for (int d = 0; d < num_dists; ++d) {
    DeepSeaSpec spec = DeepSeaSpec::make(
        grid, goal_kind_from_string(cfg.goal_kinds[d]), cfg.move_cost);
    TaskDistribution dist = TaskDistribution::categorical_goal(spec);
    DistributionInfo info;
    info.id = d;
    info.label = cfg.goal_kinds[d];
    info.entropy = optimal_action_entropy(dist, 0, 0);  // exact
    dists.push_back(std::move(dist));
    infos.push_back(std::move(info));
  }

  auto model = make_q_model(EnvSignature::deep_sea(grid));
  std::vector<DemoDataset> demo_sets(num_dists);
  std::vector<std::shared_ptr<const GibbsPrior>> priors(num_dists);
  parallel_for(num_dists, cfg.workers, [&](int d) {
    demo_sets[d] =
        generate_demos(dists[d], cfg.demo_beta, cfg.num_demos,
                       mix_seed({master, kDemoSalt, static_cast<uint64_t>(d)}));
    FitOptions opts = cfg.fit;
    opts.beta = cfg.demo_beta;
    opts.seed = mix_seed({master, kFitSalt, static_cast<uint64_t>(d)});
    FitResult fit = fit_prior(
        demo_sets[d],
        make_gaussian_sampler(model->param_dim(), cfg.agent.base_sigma), model,
        opts);
    priors[d] = std::make_shared<GibbsPrior>(std::move(fit.prior));
  });

  // One goal per (distribution, seed), shared by all agents in the cell.
  std::vector<std::vector<int>> goals(num_dists);
  std::vector<std::vector<double>> v_stars(num_dists);
  for (int d = 0; d < num_dists; ++d) {
    goals[d].resize(tasks);
    v_stars[d].resize(tasks);
    for (int j = 0; j < tasks; ++j) {
      Rng rng = make_rng({master, kTaskSalt, static_cast<uint64_t>(d),
                          static_cast<uint64_t>(j)});
      goals[d][j] = sample_deep_sea_goal(dists[d].deep_sea, rng);
      v_stars[d][j] = solve_deep_sea_q(dists[d].deep_sea, goals[d][j]).v_star;
    }
  }

  const int num_cells = num_dists * tasks * num_agents;
  RegretReport report;
  report.distributions = infos;
  report.records.resize(static_cast<size_t>(num_cells) * episodes);

  parallel_for(num_cells, cfg.workers, [&](int c) {
    const int d = c / (tasks * num_agents);
    const int rem = c % (tasks * num_agents);
    const int j = rem / num_agents;
    const int a = rem % num_agents;
    const std::string& kind = cfg.agents[a];
    const uint64_t cell_seed = mix_seed(
        {master, static_cast<uint64_t>(d), static_cast<uint64_t>(j),
         fnv1a64(kind)});
    std::unique_ptr<Agent> agent = make_deepsea_agent(
        kind, grid, priors[d], cfg.agent, mix_seed({cell_seed, kAgentSalt}));

    const DeepSeaSpec& spec = dists[d].deep_sea;
    const int goal = goals[d][j];
    const double v_star = v_stars[d][j];
    RegretRecord* out = report.records.data() +
                        static_cast<size_t>(c) * episodes;
    for (int t = 0; t < episodes; ++t) {
      agent->begin_episode();
      int row = 0;
      int col = 0;
      double ep_reward = 0.0;
      for (int h = 0; h < grid; ++h) {
        const int state = spec.state_id(row, col);
        const int action = agent->act(state);
        if (action != kDeepSeaLeft && action != kDeepSeaRight) {
          throw std::runtime_error("agent '" + kind +
                                   "' chose an out-of-range action");
        }
        DeepSeaStepResult sr = deep_sea_step(spec, row, col, action, goal);
        ep_reward += sr.reward;
        Transition tr;
        tr.state = state;
        tr.action = action;
        tr.reward = sr.reward;
        tr.next_state = sr.done ? spec.terminal_id(sr.next_col)
                                : spec.state_id(sr.next_row, sr.next_col);
        tr.terminal = sr.done;
        agent->observe(tr);
        row = sr.next_row;
        col = sr.next_col;
        if (sr.done) break;
      }
      agent->end_episode();

      RegretRecord& rec = out[t];
      rec.algo = kind;
      rec.task_dist_id = d;
      rec.task_id = j;
      rec.seed = cell_seed;
      rec.episode = t;
      rec.reward = ep_reward;
      rec.instant_regret = v_star - ep_reward;
    }
  });

  report.max_regret_identity_gap = 0.0;
  report.config_digest = hex64(fnv1a64(cfg.to_json()));
  report.version = kVersion;
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation and analysis
// ---------------------------------------------------------------------------

namespace {

// algo -> dist -> task -> per-episode instant regret
using CurveMap =
    std::map<std::string, std::map<int, std::map<int, std::vector<double>>>>;

CurveMap collect_curves(const RegretReport& report, int* episodes_out) {
  CurveMap curves;
  int episodes = 0;
  for (const RegretRecord& rec : report.records) {
    episodes = std::max(episodes, rec.episode + 1);
  }
  for (const RegretRecord& rec : report.records) {
    std::vector<double>& v = curves[rec.algo][rec.task_dist_id][rec.task_id];
    if (v.empty()) v.assign(episodes, 0.0);
    if (rec.episode < 0 || rec.episode >= episodes) {
      throw std::runtime_error("record episode out of range");
    }
    v[rec.episode] = rec.instant_regret;
  }
  // instant -> cumulative
  for (auto& by_algo : curves) {
    for (auto& by_dist : by_algo.second) {
      for (auto& by_task : by_dist.second) {
        std::vector<double>& v = by_task.second;
        for (size_t t = 1; t < v.size(); ++t) v[t] += v[t - 1];
      }
    }
  }
  if (episodes_out) *episodes_out = episodes;
  return curves;
}

std::vector<double> mean_curve(const std::vector<std::vector<double>>& curves,
                               int episodes) {
  std::vector<double> mean(episodes, 0.0);
  if (curves.empty()) return mean;
  for (const auto& c : curves) {
    for (int t = 0; t < episodes; ++t) mean[t] += c[t];
  }
  for (int t = 0; t < episodes; ++t) {
    mean[t] /= static_cast<double>(curves.size());
  }
  return mean;
}

std::vector<double> stderr_curve(
    const std::vector<std::vector<double>>& curves,
    const std::vector<double>& mean, int episodes) {
  std::vector<double> se(episodes, 0.0);
  const int n = static_cast<int>(curves.size());
  if (n < 2) return se;
  for (const auto& c : curves) {
    for (int t = 0; t < episodes; ++t) {
      const double d = c[t] - mean[t];
      se[t] += d * d;
    }
  }
  for (int t = 0; t < episodes; ++t) {
    se[t] = std::sqrt(se[t] / (n - 1)) / std::sqrt(static_cast<double>(n));
  }
  return se;
}

}  // namespace

std::vector<AggregateRow> aggregate(const RegretReport& report, GroupBy by) {
  int episodes = 0;
  CurveMap curves = collect_curves(report, &episodes);

  std::map<int, double> entropy_of;
  for (const DistributionInfo& info : report.distributions) {
    entropy_of[info.id] = info.entropy;
  }

  std::vector<AggregateRow> rows;
  for (const auto& by_algo : curves) {
    const std::string& algo = by_algo.first;
    if (by == GroupBy::Distribution) {
      // Group = one distribution; spread across tasks.
      for (const auto& by_dist : by_algo.second) {
        std::vector<std::vector<double>> task_curves;
        for (const auto& by_task : by_dist.second) {
          task_curves.push_back(by_task.second);
        }
        std::vector<double> mean = mean_curve(task_curves, episodes);
        std::vector<double> se = stderr_curve(task_curves, mean, episodes);
        for (int t = 0; t < episodes; ++t) {
          rows.push_back({algo, "dist-" + std::to_string(by_dist.first), t,
                          mean[t], se[t]});
        }
      }
      continue;
    }
    // Group = all distributions, or one entropy bin; first average tasks
    // within each distribution, then spread across distributions.
    std::map<std::string, std::vector<std::vector<double>>> grouped;
    for (const auto& by_dist : by_algo.second) {
      std::vector<std::vector<double>> task_curves;
      for (const auto& by_task : by_dist.second) {
        task_curves.push_back(by_task.second);
      }
      std::string group = "all";
      if (by == GroupBy::EntropyBin) {
        auto it = entropy_of.find(by_dist.first);
        if (it == entropy_of.end()) {
          throw std::runtime_error(
              "record references a distribution missing from the metadata");
        }
        group = entropy_bin(it->second);
      }
      grouped[group].push_back(mean_curve(task_curves, episodes));
    }
    for (const auto& g : grouped) {
      std::vector<double> mean = mean_curve(g.second, episodes);
      std::vector<double> se = stderr_curve(g.second, mean, episodes);
      for (int t = 0; t < episodes; ++t) {
        rows.push_back({algo, g.first, t, mean[t], se[t]});
      }
    }
  }
  return rows;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) +
                     1.0;  // average 1-based rank of the tie block
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson_corr(const std::vector<double>& x, const std::vector<double>& y,
                    bool* degenerate) {
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

RegretEntropyStats regret_vs_entropy(const RegretReport& report,
                                     const std::string& algo) {
  int episodes = 0;
  CurveMap curves = collect_curves(report, &episodes);
  auto it = curves.find(algo);
  if (it == curves.end()) {
    throw std::runtime_error("no records for algorithm '" + algo + "'");
  }
  std::map<int, double> entropy_of;
  for (const DistributionInfo& info : report.distributions) {
    entropy_of[info.id] = info.entropy;
  }

  RegretEntropyStats stats;
  for (const auto& by_dist : it->second) {
    double total = 0.0;
    int n = 0;
    for (const auto& by_task : by_dist.second) {
      total += by_task.second.back();
      ++n;
    }
    auto eit = entropy_of.find(by_dist.first);
    if (eit == entropy_of.end()) {
      throw std::runtime_error(
          "record references a distribution missing from the metadata");
    }
    stats.points.push_back({by_dist.first, eit->second, total / n});
  }
  if (stats.points.size() < 2) {
    stats.degenerate = true;
    return stats;
  }

  std::vector<double> xs, ys;
  for (const auto& p : stats.points) {
    xs.push_back(p.entropy);
    ys.push_back(p.final_regret);
  }
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0) {
    stats.degenerate = true;
    return stats;
  }
  stats.slope = sxy / sxx;
  stats.pearson = pearson_corr(xs, ys, &stats.degenerate);
  stats.spearman =
      pearson_corr(average_ranks(xs), average_ranks(ys), &stats.degenerate);
  return stats;
}

// ---------------------------------------------------------------------------
// CSV / JSON emission
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kRecordsHeader =
    "algo,task_dist_id,task_id,seed,episode,reward,instant_regret";
}

void write_records_csv(const RegretReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << kRecordsHeader << "\n";
  char buf[256];
  for (const RegretRecord& rec : report.records) {
    std::snprintf(buf, sizeof(buf), ",%d,%d,%" PRIu64 ",%d,", rec.task_dist_id,
                  rec.task_id, rec.seed, rec.episode);
    out << rec.algo << buf << format_double(rec.reward) << ','
        << format_double(rec.instant_regret) << '\n';
  }
  if (!out) throw std::runtime_error("failed while writing: " + path);
}

std::vector<RegretRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open records file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) {
    throw std::runtime_error("records file has an unexpected header: " + path);
  }
  std::vector<RegretRecord> records;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        parts.push_back(line.substr(start));
        break;
      }
      parts.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (parts.size() != 7) {
      throw std::runtime_error("bad CSV row at line " +
                               std::to_string(line_no) + " in " + path);
    }
    RegretRecord rec;
    rec.algo = parts[0];
    rec.task_dist_id = std::stoi(parts[1]);
    rec.task_id = std::stoi(parts[2]);
    rec.seed = std::strtoull(parts[3].c_str(), nullptr, 10);
    rec.episode = std::stoi(parts[4]);
    rec.reward = std::strtod(parts[5].c_str(), nullptr);
    rec.instant_regret = std::strtod(parts[6].c_str(), nullptr);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << "algo,group,episode,mean_cum_regret,stderr\n";
  for (const AggregateRow& row : rows) {
    out << row.algo << ',' << row.group << ',' << row.episode << ','
        << format_double(row.mean_cum_regret) << ','
        << format_double(row.stderr_value) << '\n';
  }
  if (!out) throw std::runtime_error("failed while writing: " + path);
}

void write_report_json(const RegretReport& report, const std::string& path) {
  json dists = json::array();
  for (const DistributionInfo& info : report.distributions) {
    dists.push_back({{"id", info.id},
                     {"label", info.label},
                     {"entropy", info.entropy}});
  }
  json root;
  root["version"] = report.version;
  root["config_digest"] = report.config_digest;
  root["max_regret_identity_gap"] = report.max_regret_identity_gap;
  root["distributions"] = dists;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << root.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed while writing: " + path);
}

RegretReport read_report_json(const std::string& records_csv,
                              const std::string& meta_json) {
  std::ifstream in(meta_json, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open report file: " + meta_json);
  json root = json::parse(in);
  RegretReport report;
  report.version = root.value("version", "");
  report.config_digest = root.value("config_digest", "");
  report.max_regret_identity_gap =
      root.value("max_regret_identity_gap", 0.0);
  if (root.contains("distributions")) {
    for (const json& d : root["distributions"]) {
      DistributionInfo info;
      info.id = d.at("id").get<int>();
      info.label = d.value("label", "");
      info.entropy = d.at("entropy").get<double>();
      report.distributions.push_back(std::move(info));
    }
  }
  report.records = read_records_csv(records_csv);
  return report;
}

}  // namespace experior
