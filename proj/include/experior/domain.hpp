#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace experior {

/**
 * Unobserved task parameter.
 *
 * Interpretation depends on the environment family: per-arm success means
 * for Bernoulli bandits, a flattened state-action value table for tabular
 * MDPs, or regression weights for linear-contextual bandits.
 */
struct TaskParam {
  std::vector<double> values;

  TaskParam() = default;
  explicit TaskParam(std::vector<double> v) : values(std::move(v)) {}
  TaskParam(std::initializer_list<double> v) : values(v) {}

  int size() const { return static_cast<int>(values.size()); }
  double operator[](int i) const { return values[static_cast<size_t>(i)]; }
  double& operator[](int i) { return values[static_cast<size_t>(i)]; }
  bool operator==(const TaskParam& o) const { return values == o.values; }
};

struct TrajectoryStep {
  int state = 0;
  int action = 0;
  bool operator==(const TrajectoryStep&) const = default;
};

/** One expert demonstration: a state-action sequence plus the final state. */
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  int terminal_state = 0;

  int horizon() const { return static_cast<int>(steps.size()); }
  bool operator==(const Trajectory&) const = default;
};

/** A set of expert demonstrations tied to one environment signature. */
struct DemoDataset {
  std::string env_signature;
  int horizon = 1;
  std::vector<Trajectory> trajectories;

  int size() const { return static_cast<int>(trajectories.size()); }
  bool empty() const { return trajectories.empty(); }
  bool operator==(const DemoDataset&) const = default;
};

/** One environment interaction (s, a, r, s'). */
struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  bool terminal = false;
};

/** Everything the learner has observed online, episode by episode. */
struct OnlineHistory {
  std::vector<std::vector<Transition>> episodes;

  int num_episodes() const { return static_cast<int>(episodes.size()); }
  int total_steps() const {
    int n = 0;
    for (const auto& ep : episodes) n += static_cast<int>(ep.size());
    return n;
  }
};

/** One benchmark measurement row. */
struct RegretRecord {
  std::string algo;
  int task_dist_id = 0;
  int task_id = 0;
  uint64_t seed = 0;
  int episode = 0;
  double reward = 0.0;
  double instant_regret = 0.0;
};

enum class EnvFamily { BernoulliBandit, DeepSea, LinearBandit };

/**
 * Compact identifier of an environment family and its size, e.g.
 * "bandit:10" (10-armed Bernoulli), "deepsea:30" (30x30 grid) or
 * "linear:5x4x3" (5 contexts, 4 actions, 3 features).
 */
struct EnvSignature {
  EnvFamily family = EnvFamily::BernoulliBandit;
  int size = 0;          // arm count (bandit) or grid side (deep sea)
  int num_actions = 0;   // linear-contextual only
  int feature_dim = 0;   // linear-contextual only

  static EnvSignature bandit(int num_arms);
  static EnvSignature deep_sea(int grid_size);
  static EnvSignature linear(int num_contexts, int actions, int dim);

  std::string to_string() const;
  static EnvSignature parse(const std::string& text);

  bool operator==(const EnvSignature&) const = default;
};

/** Outcome of validate_dataset: structural errors plus an empty-data flag. */
struct ValidationReport {
  bool ok = true;
  bool empty = false;
  std::vector<std::string> errors;
};

/**
 * Checks that every trajectory matches the dataset horizon and that all
 * state/action ids are within the signature's ranges. An empty dataset is
 * valid but flagged.
 */
ValidationReport validate_dataset(const DemoDataset& demos,
                                  const EnvSignature& sig);

/**
 * Demo file IO. Line-oriented JSON: a header object
 *   {"env":"<signature>","horizon":H}
 * followed by one trajectory object per line,
 *   {"steps":[[s,a],...],"terminal":s}.
 */
void write_demo_file(const DemoDataset& demos, const std::string& path);
DemoDataset read_demo_file(const std::string& path);

std::string write_demo_text(const DemoDataset& demos);
DemoDataset read_demo_text(const std::string& text);

/** 64-bit FNV-1a hash, hex-encoded; used to tie priors to their demos. */
std::string hash_bytes(const std::string& bytes);

}  // namespace experior
