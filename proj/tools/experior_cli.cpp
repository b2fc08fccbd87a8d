// Command-line front end: demo generation, prior fitting, and the bandit /
// deep-sea regret benchmarks, all driven by a JSON config file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "experior/domain.hpp"
#include "experior/envs.hpp"
#include "experior/harness.hpp"
#include "experior/maxent.hpp"
#include "experior/rng.hpp"

namespace fs = std::filesystem;
using namespace experior;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  ExperimentConfig cfg = ExperimentConfig::load(opts.config_path);
  if (opts.seed) cfg.master_seed = *opts.seed;
  if (opts.workers) cfg.workers = *opts.workers;
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  return cfg;
}

// Builds the first task distribution named by the config (used by gen-demos).
TaskDistribution first_distribution(const ExperimentConfig& cfg) {
  if (cfg.env_kind == "deepsea") {
    DeepSeaSpec spec = DeepSeaSpec::make(
        cfg.grid_size,
        [&] {
          const std::string& g = cfg.goal_kinds.at(0);
          if (g == "corner") return GoalDistributionKind::Corner;
          if (g == "right-quarter") return GoalDistributionKind::RightQuarter;
          if (g == "right-half") return GoalDistributionKind::RightHalf;
          return GoalDistributionKind::Uniform;
        }(),
        cfg.move_cost);
    return TaskDistribution::categorical_goal(spec);
  }
  if (cfg.distributions.mode == "explicit") {
    if (cfg.distributions.explicit_params.empty()) {
      throw std::runtime_error("config has no explicit beta_params");
    }
    return TaskDistribution::beta_product(cfg.distributions.explicit_params[0]);
  }
  Rng rng = make_rng({cfg.master_seed, 0x64697374ULL});
  return sample_beta_product_distribution(cfg.num_arms, rng);
}

void write_suite_outputs(const RegretReport& report, const std::string& dir) {
  fs::create_directories(dir);
  write_records_csv(report, dir + "/records.csv");
  write_report_json(report, dir + "/report.json");
  write_aggregate_csv(aggregate(report, GroupBy::Algo),
                      dir + "/aggregate_overall.csv");
  write_aggregate_csv(aggregate(report, GroupBy::EntropyBin),
                      dir + "/aggregate_by_bin.csv");
  write_aggregate_csv(aggregate(report, GroupBy::Distribution),
                      dir + "/aggregate_by_dist.csv");
}

void print_summary(const RegretReport& report) {
  std::printf("version %s  config %s\n", report.version.c_str(),
              report.config_digest.c_str());
  std::printf("distributions: %zu\n", report.distributions.size());
  for (const DistributionInfo& info : report.distributions) {
    std::printf("  [%d] %-18s entropy %.4f nats (%s)\n", info.id,
                info.label.c_str(), info.entropy,
                entropy_bin(info.entropy).c_str());
  }
  std::printf("regret identity gap: %.3g\n", report.max_regret_identity_gap);
  std::vector<AggregateRow> rows = aggregate(report, GroupBy::Algo);
  int last_episode = 0;
  for (const AggregateRow& r : rows) last_episode = std::max(last_episode, r.episode);
  std::printf("final mean cumulative regret (episode %d):\n", last_episode);
  for (const AggregateRow& r : rows) {
    if (r.episode == last_episode) {
      std::printf("  %-18s %10.4f  +/- %.4f\n", r.algo.c_str(),
                  r.mean_cum_regret, r.stderr_value);
    }
  }
}

void print_entropy_stats(const RegretReport& report) {
  if (report.distributions.size() < 2) return;
  std::set<std::string> algos;
  for (const RegretRecord& rec : report.records) algos.insert(rec.algo);
  std::printf("final regret vs entropy:\n");
  for (const std::string& algo : algos) {
    RegretEntropyStats st = regret_vs_entropy(report, algo);
    if (st.degenerate) {
      std::printf("  %-18s degenerate (no spread)\n", algo.c_str());
    } else {
      std::printf("  %-18s slope %8.4f  pearson %6.3f  spearman %6.3f\n",
                  algo.c_str(), st.slope, st.pearson, st.spearman);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Max-entropy expert priors for bandits and Deep Sea"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", opts.config_path,
                              "JSON experiment config");
    if (need_config) c->required();
    sub->add_option("--seed", [&opts](const std::vector<std::string>& v) {
      opts.seed = std::strtoull(v[0].c_str(), nullptr, 10);
      return true;
    }, "Master seed override");
    sub->add_option("--workers", [&opts](const std::vector<std::string>& v) {
      opts.workers = std::stoi(v[0]);
      return true;
    }, "Worker thread count override");
    sub->add_option("--out", opts.out, "Output path or directory");
  };

  CLI::App* gen = app.add_subcommand(
      "gen-demos", "Sample expert demonstrations to a JSONL file");
  add_common(gen, true);

  CLI::App* fit = app.add_subcommand(
      "fit-prior", "Fit the max-entropy prior from a demo file");
  add_common(fit, true);
  std::string demos_path;
  fit->add_option("--demos", demos_path, "Demo JSONL file")->required();

  CLI::App* runb = app.add_subcommand(
      "run-bandit", "Run the Bernoulli bandit regret benchmark");
  add_common(runb, true);

  CLI::App* rund = app.add_subcommand(
      "run-deepsea", "Run the Deep Sea regret benchmark");
  add_common(rund, true);

  CLI::App* rep = app.add_subcommand(
      "report", "Aggregate an existing records.csv + report.json");
  std::string records_path, meta_path;
  rep->add_option("--records", records_path, "records.csv path")->required();
  rep->add_option("--meta", meta_path, "report.json path")->required();
  rep->add_option("--out", opts.out, "Output directory for aggregates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // app.exit prints the message (or help text); fold CLI11's per-error
    // exit codes into the single usage-error code, keeping --help at 0.
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  // Configuration loading and validation failures exit with kExitConfig.
  ExperimentConfig cfg;
  bool have_cfg = false;
  try {
    if (!opts.config_path.empty()) {
      cfg = load_with_overrides(opts);
      have_cfg = true;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      std::string out = opts.out.empty() ? "demos.jsonl" : opts.out;
      TaskDistribution dist = first_distribution(cfg);
      DemoDataset demos =
          generate_demos(dist, cfg.demo_beta, cfg.num_demos,
                         mix_seed({cfg.master_seed, 0x64656d6fULL, 0}));
      ValidationReport vr = validate_dataset(
          demos, EnvSignature::parse(demos.env_signature));
      if (!vr.ok) {
        throw std::runtime_error("generated demos failed validation: " +
                                 (vr.errors.empty() ? "?" : vr.errors[0]));
      }
      write_demo_file(demos, out);
      std::printf("wrote %zu demos (%s, horizon %d) to %s\n",
                  demos.trajectories.size(), demos.env_signature.c_str(),
                  demos.horizon, out.c_str());
    } else if (fit->parsed()) {
      std::string out = opts.out.empty() ? "prior.json" : opts.out;
      DemoDataset demos;
      try {
        demos = read_demo_file(demos_path);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
      }
      EnvSignature sig = EnvSignature::parse(demos.env_signature);
      ValidationReport vr = validate_dataset(demos, sig);
      if (!vr.ok) {
        std::fprintf(stderr, "invalid demo file:\n");
        for (const std::string& e : vr.errors) {
          std::fprintf(stderr, "  %s\n", e.c_str());
        }
        return kExitConfig;
      }
      auto model = make_q_model(sig);
      FitOptions fopts = cfg.fit;
      fopts.beta = cfg.demo_beta;
      fopts.seed = mix_seed({cfg.master_seed, 0x666974ULL});
      TaskSampler mu0 =
          sig.family == EnvFamily::DeepSea
              ? make_gaussian_sampler(model->param_dim(), cfg.agent.base_sigma)
              : make_uniform_box_sampler(model->param_dim());
      FitResult res = fit_prior(demos, mu0, model, fopts);
      std::ofstream of(out, std::ios::binary);
      if (!of) throw std::runtime_error("cannot open output file: " + out);
      of << prior_to_json(res.prior) << '\n';
      NormalizationCheck nc = prior_normalization_check(
          res.prior, mu0, cfg.fit.reference_samples,
          mix_seed({cfg.master_seed, 0x6e6f726dULL}));
      std::printf(
          "fit %d demos: dual %.6f, grad norm %.3g, ess ratio %.3f -> %s\n",
          res.prior.num_demos(), res.report.final_dual,
          res.report.final_grad_norm, nc.ess_ratio, out.c_str());
    } else if (runb->parsed() || rund->parsed()) {
      RegretReport report = runb->parsed() ? run_bandit_suite(cfg)
                                           : run_deepsea_suite(cfg);
      write_suite_outputs(report, cfg.output_dir);
      print_summary(report);
      if (runb->parsed()) print_entropy_stats(report);
      std::printf("outputs in %s\n", cfg.output_dir.c_str());
    } else if (rep->parsed()) {
      RegretReport report;
      try {
        report = read_report_json(records_path, meta_path);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
      }
      if (!opts.out.empty()) {
        fs::create_directories(opts.out);
        write_aggregate_csv(aggregate(report, GroupBy::Algo),
                            opts.out + "/aggregate_overall.csv");
        write_aggregate_csv(aggregate(report, GroupBy::EntropyBin),
                            opts.out + "/aggregate_by_bin.csv");
        write_aggregate_csv(aggregate(report, GroupBy::Distribution),
                            opts.out + "/aggregate_by_dist.csv");
      }
      print_summary(report);
      print_entropy_stats(report);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  (void)have_cfg;
  return kExitOk;
}
