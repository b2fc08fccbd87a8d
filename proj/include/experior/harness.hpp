#pragma once

#include <functional>
#include <string>
#include <vector>

#include "experior/agents.hpp"
#include "experior/domain.hpp"
#include "experior/envs.hpp"
#include "experior/maxent.hpp"

namespace experior {

/**
 * How task distributions are produced for a bandit suite:
 *  - "flat": `count` beta-product laws drawn from the seeded generator;
 *  - "per-bin": keep drawing until each entropy bin holds `count` laws;
 *  - "explicit": use the given per-arm Beta parameter lists.
 */
struct DistributionsConfig {
  std::string mode = "flat";
  int count = 16;
  int max_attempts = 20000;  // per-bin mode
  std::vector<std::vector<std::pair<double, double>>> explicit_params;
};

struct ExperimentConfig {
  // environment
  std::string env_kind = "bandit";  // "bandit" | "deepsea"
  int num_arms = 10;
  int grid_size = 10;
  std::vector<std::string> goal_kinds = {"corner"};  // deepsea
  double move_cost = -1.0;  // negative: use the 0.01/M default

  // experiment shape
  int episodes = 300;
  int tasks_per_distribution = 32;  // bandit tasks or deepsea seeds
  DistributionsConfig distributions;
  uint64_t master_seed = 1;
  int workers = 1;
  int entropy_mc_samples = 4096;

  // demonstrations and prior fit
  int num_demos = 200;
  double demo_beta = kBetaInf;
  FitOptions fit;  // lambda_star, beta_eff, reference_samples, iterations, ...

  // agents
  std::vector<std::string> agents;
  AgentConfig agent;

  std::string output_dir = "out";

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& json_text);
  static ExperimentConfig load(const std::string& path);
};

struct DistributionInfo {
  int id = 0;
  std::string label;
  double entropy = 0.0;
};

struct RegretReport {
  std::vector<DistributionInfo> distributions;
  std::vector<RegretRecord> records;
  // Bandit accounting check: max over cells of
  // | sum instant_regret - (T max_k theta_k - sum_t theta_chosen) |.
  double max_regret_identity_gap = 0.0;
  std::string config_digest;
  std::string version;
};

/**
 * Bandit benchmark: per distribution, fit one prior from fresh demos and
 * roll every agent over tasks_per_distribution tasks for `episodes` pulls.
 * Cell seeds derive from (master seed, distribution, task, agent), so
 * results are byte-identical for any worker count.
 */
RegretReport run_bandit_suite(const ExperimentConfig& cfg);

/** Deep Sea benchmark: one goal draw per seed, shared by all agents. */
RegretReport run_deepsea_suite(const ExperimentConfig& cfg);

std::string entropy_bin(double entropy);  // low < 0.8, high > 1.6 (nats)

enum class GroupBy { Algo, EntropyBin, Distribution };

struct AggregateRow {
  std::string algo;
  std::string group;
  int episode = 0;
  double mean_cum_regret = 0.0;
  double stderr_value = 0.0;
};

/**
 * Mean cumulative regret curves: task curves average within each
 * distribution first, then distributions average within the group; the
 * standard error is taken across the top grouping level.
 */
std::vector<AggregateRow> aggregate(const RegretReport& report, GroupBy by);

struct RegretEntropyPoint {
  int dist_id = 0;
  double entropy = 0.0;
  double final_regret = 0.0;
};

struct RegretEntropyStats {
  std::vector<RegretEntropyPoint> points;
  double slope = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
  bool degenerate = false;  // zero variance on either axis
};

/** Final cumulative regret of one algorithm against distribution entropy. */
RegretEntropyStats regret_vs_entropy(const RegretReport& report,
                                     const std::string& algo);

// Records CSV schema: algo,task_dist_id,task_id,seed,episode,reward,instant_regret
void write_records_csv(const RegretReport& report, const std::string& path);
std::vector<RegretRecord> read_records_csv(const std::string& path);
void write_aggregate_csv(const std::vector<AggregateRow>& rows,
                         const std::string& path);

/** Sidecar metadata (distribution entropies, digest, identity gap). */
void write_report_json(const RegretReport& report, const std::string& path);
RegretReport read_report_json(const std::string& records_csv,
                              const std::string& meta_json);

/** Runs fn(0..n-1) on `workers` threads; outputs must go to per-index slots. */
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace experior
