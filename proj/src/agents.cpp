#include "experior/agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace experior {

// ---------------------------------------------------------------------------
// Decision rules
// ---------------------------------------------------------------------------

int naive_ucb_act(const std::vector<int>& counts,
                  const std::vector<double>& means, int t) {
  const int k = static_cast<int>(counts.size());
  if (k == 0 || counts.size() != means.size())
    throw std::invalid_argument("bad counts/means");
  for (int a = 0; a < k; ++a)
    if (counts[static_cast<size_t>(a)] == 0) return a;
  int best = 0;
  double best_index = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a) {
    double n = static_cast<double>(counts[static_cast<size_t>(a)]);
    double index = means[static_cast<size_t>(a)] +
                   std::sqrt(2.0 * std::log(static_cast<double>(t)) / n);
    if (index > best_index) {
      best_index = index;
      best = a;
    }
  }
  return best;
}

int ucb_explore_act(const std::vector<int>& demo_counts,
                    const std::vector<int>& counts,
                    const std::vector<double>& means, int t) {
  const int k = static_cast<int>(counts.size());
  if (demo_counts.size() != counts.size())
    throw std::invalid_argument("bad demo counts");
  for (int a = 0; a < k; ++a)
    if (counts[static_cast<size_t>(a)] == 0) return a;

  const double log_t = std::log(static_cast<double>(t));
  int best = 0;
  double best_index = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a) {
    double n_online = static_cast<double>(counts[static_cast<size_t>(a)]);
    double online_index = means[static_cast<size_t>(a)] +
                          std::sqrt(2.0 * log_t / n_online);
    double pseudo_reward = std::min(1.0, online_index);
    double n_demo = static_cast<double>(demo_counts[static_cast<size_t>(a)]);
    double n = n_online + n_demo;
    double mean = (means[static_cast<size_t>(a)] * n_online +
                   pseudo_reward * n_demo) /
                  n;
    double index = mean + std::sqrt(2.0 * log_t / n);
    if (index > best_index) {
      best_index = index;
      best = a;
    }
  }
  return best;
}

int oracle_ts_act(const std::vector<std::pair<double, double>>& beta_params,
                  const std::vector<double>& successes,
                  const std::vector<int>& counts, Rng& rng) {
  const int k = static_cast<int>(beta_params.size());
  if (successes.size() != beta_params.size() ||
      counts.size() != beta_params.size())
    throw std::invalid_argument("bad posterior statistics");
  int best = 0;
  double best_draw = -1.0;
  for (int a = 0; a < k; ++a) {
    double s = successes[static_cast<size_t>(a)];
    double n = static_cast<double>(counts[static_cast<size_t>(a)]);
    double draw = sample_beta(beta_params[static_cast<size_t>(a)].first + s,
                              beta_params[static_cast<size_t>(a)].second +
                                  (n - s),
                              rng);
    if (draw > best_draw) {
      best_draw = draw;
      best = a;
    }
  }
  return best;
}

std::vector<double> bc_distribution(const DemoDataset& demos, int num_arms) {
  std::vector<double> probs(static_cast<size_t>(num_arms), 0.0);
  int total = 0;
  for (const Trajectory& traj : demos.trajectories)
    for (const TrajectoryStep& st : traj.steps) {
      if (st.action < 0 || st.action >= num_arms)
        throw std::invalid_argument("demo action out of range");
      probs[static_cast<size_t>(st.action)] += 1.0;
      ++total;
    }
  if (total == 0)
    return std::vector<double>(static_cast<size_t>(num_arms),
                               1.0 / num_arms);
  for (double& p : probs) p /= total;
  return probs;
}

int argmax_with_uniform_ties(const double* values, int n, Rng& rng) {
  double best = values[0];
  for (int i = 1; i < n; ++i) best = std::max(best, values[i]);
  int ties = 0;
  for (int i = 0; i < n; ++i)
    if (values[i] == best) ++ties;
  if (ties == 1) {
    for (int i = 0; i < n; ++i)
      if (values[i] == best) return i;
  }
  std::uniform_int_distribution<int> pick(0, ties - 1);
  int target = pick(rng);
  for (int i = 0; i < n; ++i) {
    if (values[i] == best && target-- == 0) return i;
  }
  return n - 1;
}

// ---------------------------------------------------------------------------
// Bandit agents
// ---------------------------------------------------------------------------

namespace {

class ExperiorTsAgent : public Agent {
 public:
  ExperiorTsAgent(int num_arms, std::shared_ptr<const GibbsPrior> prior,
                  const AgentConfig& cfg, uint64_t seed)
      : num_arms_(num_arms),
        prior_(std::move(prior)),
        stats_(num_arms),
        cfg_(cfg),
        rng_(seed) {
    target_ = make_bandit_posterior_target(*prior_, stats_);
    if (cfg_.ts_burn_in_steps > 0) {
      SgldConfig burn = cfg_.sgld;
      burn.steps = cfg_.ts_burn_in_steps;
      burn.step_size = cfg_.ts_burn_in_step_size;
      posterior_sample(target_, burn, chain_, rng_);
    }
  }

  void begin_episode() override {
    theta_ = posterior_sample(target_, cfg_.sgld, chain_, rng_);
  }
  int act(int state) override {
    (void)state;
    return argmax_with_uniform_ties(theta_.values.data(), num_arms_, rng_);
  }
  void observe(const Transition& tr) override {
    stats_.observe(tr.action, tr.reward);
  }

 private:
  int num_arms_;
  std::shared_ptr<const GibbsPrior> prior_;
  BanditStats stats_;
  AgentConfig cfg_;
  Rng rng_;
  LogDensity target_;
  SgldChain chain_;
  TaskParam theta_;
};

class NaiveUcbAgent : public Agent {
 public:
  NaiveUcbAgent(int num_arms)
      : counts_(static_cast<size_t>(num_arms), 0),
        means_(static_cast<size_t>(num_arms), 0.0) {}

  void begin_episode() override { ++t_; }
  int act(int state) override {
    (void)state;
    return naive_ucb_act(counts_, means_, t_);
  }
  void observe(const Transition& tr) override {
    auto a = static_cast<size_t>(tr.action);
    counts_[a] += 1;
    means_[a] += (tr.reward - means_[a]) / counts_[a];
  }

 private:
  std::vector<int> counts_;
  std::vector<double> means_;
  int t_ = 0;
};

class UcbExploreAgent : public Agent {
 public:
  UcbExploreAgent(int num_arms, const DemoDataset& demos)
      : demo_counts_(static_cast<size_t>(num_arms), 0),
        counts_(static_cast<size_t>(num_arms), 0),
        means_(static_cast<size_t>(num_arms), 0.0) {
    for (const Trajectory& traj : demos.trajectories)
      for (const TrajectoryStep& st : traj.steps) {
        if (st.action < 0 || st.action >= num_arms)
          throw std::invalid_argument("demo action out of range");
        demo_counts_[static_cast<size_t>(st.action)] += 1;
      }
  }

  void begin_episode() override { ++t_; }
  int act(int state) override {
    (void)state;
    return ucb_explore_act(demo_counts_, counts_, means_, t_);
  }
  void observe(const Transition& tr) override {
    auto a = static_cast<size_t>(tr.action);
    counts_[a] += 1;
    means_[a] += (tr.reward - means_[a]) / counts_[a];
  }

 private:
  std::vector<int> demo_counts_;
  std::vector<int> counts_;
  std::vector<double> means_;
  int t_ = 0;
};

class BcAgent : public Agent {
 public:
  BcAgent(int num_arms, const DemoDataset& demos, uint64_t seed)
      : probs_(bc_distribution(demos, num_arms)), rng_(seed) {}

  int act(int state) override {
    (void)state;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng_);
    double acc = 0.0;
    for (size_t a = 0; a < probs_.size(); ++a) {
      acc += probs_[a];
      if (u <= acc) return static_cast<int>(a);
    }
    return static_cast<int>(probs_.size()) - 1;
  }
  void observe(const Transition& tr) override { (void)tr; }

 private:
  std::vector<double> probs_;
  Rng rng_;
};

class OracleTsAgent : public Agent {
 public:
  OracleTsAgent(const TaskDistribution& dist, uint64_t seed)
      : params_(dist.beta_params),
        successes_(params_.size(), 0.0),
        counts_(params_.size(), 0),
        rng_(seed) {
    if (dist.kind != TaskDistributionKind::BetaProduct)
      throw std::invalid_argument(
          "oracle-ts needs a beta-product task distribution");
  }

  int act(int state) override {
    (void)state;
    return oracle_ts_act(params_, successes_, counts_, rng_);
  }
  void observe(const Transition& tr) override {
    successes_[static_cast<size_t>(tr.action)] += tr.reward;
    counts_[static_cast<size_t>(tr.action)] += 1;
  }

 private:
  std::vector<std::pair<double, double>> params_;
  std::vector<double> successes_;
  std::vector<int> counts_;
  Rng rng_;
};

}  // namespace

std::unique_ptr<Agent> make_bandit_agent(
    const std::string& kind, int num_arms,
    std::shared_ptr<const GibbsPrior> prior, const TaskDistribution* task_dist,
    const DemoDataset* demos, const AgentConfig& cfg, uint64_t seed) {
  if (kind == "experior-ts") {
    if (!prior) throw std::invalid_argument("experior-ts needs a prior");
    return std::make_unique<ExperiorTsAgent>(num_arms, std::move(prior), cfg,
                                             seed);
  }
  if (kind == "naive-ts") {
    auto empty = std::make_shared<GibbsPrior>(
        GibbsPrior::empty(std::make_shared<BanditQModel>(num_arms)));
    return std::make_unique<ExperiorTsAgent>(num_arms, std::move(empty), cfg,
                                             seed);
  }
  if (kind == "naive-ucb") return std::make_unique<NaiveUcbAgent>(num_arms);
  if (kind == "ucb-explore") {
    if (!demos) throw std::invalid_argument("ucb-explore needs demos");
    return std::make_unique<UcbExploreAgent>(num_arms, *demos);
  }
  if (kind == "bc") {
    if (!demos) throw std::invalid_argument("bc needs demos");
    return std::make_unique<BcAgent>(num_arms, *demos, seed);
  }
  if (kind == "oracle-ts") {
    if (!task_dist) throw std::invalid_argument("oracle-ts needs the task law");
    return std::make_unique<OracleTsAgent>(*task_dist, seed);
  }
  throw std::invalid_argument("unknown bandit agent kind: " + kind);
}

// ---------------------------------------------------------------------------
// Bootstrapped ensemble Q-learning
// ---------------------------------------------------------------------------

EnsembleState init_ensemble(const GibbsPrior* prior, int size,
                            const AgentConfig& cfg, Rng& rng) {
  if (size < 1) throw std::invalid_argument("ensemble size must be >= 1");
  if (size > 32)
    throw std::invalid_argument(
        "ensemble size is capped at 32 by the bootstrap mask width");
  EnsembleState ensemble;
  ensemble.members.reserve(static_cast<size_t>(size));

  if (prior != nullptr && !prior->is_empty()) {
    OnlineHistory no_data;
    LogDensity target =
        make_mdp_posterior_target(*prior, no_data, cfg.base_sigma);
    if (cfg.init_grad_clip > 0.0) {
      const double clip = cfg.init_grad_clip;
      auto unclipped = target.eval;
      target.eval = [unclipped, clip](const Eigen::VectorXd& theta,
                                      Eigen::VectorXd* grad) {
        const double value = unclipped(theta, grad);
        if (grad != nullptr)
          *grad = grad->cwiseMax(-clip).cwiseMin(clip);
        return value;
      };
    }
    SgldConfig sgld;
    sgld.step_size = cfg.init_sgld_step_size;
    sgld.steps = cfg.init_sgld_steps;
    for (int m = 0; m < size; ++m) {
      // Start each chain at the all-zero Q-table (the base measure's mode,
      // i.e. a uniform policy). The prior's pull toward demo-consistent
      // tables is strongest there; a random start can place the chain where
      // the demo likelihoods, and hence the prior gradient, underflow.
      SgldChain chain;
      chain.xi = Eigen::VectorXd::Zero(target.dim);
      chain.initialized = true;
      TaskParam draw =
          posterior_sample(target, sgld, chain, rng, cfg.base_sigma);
      ensemble.members.push_back(Eigen::Map<Eigen::VectorXd>(
          draw.values.data(), static_cast<Eigen::Index>(draw.values.size())));
    }
    return ensemble;
  }

  std::normal_distribution<double> normal(0.0, cfg.init_sigma);
  const int dim = prior != nullptr ? prior->model->param_dim() : 0;
  if (dim == 0) throw std::invalid_argument("cannot size the ensemble");
  for (int m = 0; m < size; ++m) {
    Eigen::VectorXd q(dim);
    for (int i = 0; i < dim; ++i) q[i] = normal(rng);
    ensemble.members.push_back(std::move(q));
  }
  return ensemble;
}

void bootdqn_update(EnsembleState& ensemble,
                    const std::vector<ReplayItem>& replay,
                    const DeepSeaQModel& model, const AgentConfig& cfg,
                    Rng& rng) {
  if (replay.empty()) return;
  std::uniform_int_distribution<size_t> pick(0, replay.size() - 1);
  const double scale = cfg.learning_rate / cfg.batch_size;

  for (int m = 0; m < ensemble.size(); ++m) {
    Eigen::VectorXd& q = ensemble.members[static_cast<size_t>(m)];
    const uint32_t bit = 1u << m;
    for (int step = 0; step < cfg.grad_steps; ++step) {
      for (int b = 0; b < cfg.batch_size; ++b) {
        const ReplayItem& item = replay[pick(rng)];
        if (!(item.mask & bit)) continue;
        const Transition& tr = item.tr;
        double q_sa = q[2 * tr.state + tr.action];
        double target = tr.reward;
        if (!tr.terminal)
          target += std::max(q[2 * tr.next_state], q[2 * tr.next_state + 1]);
        // Q-learning step: the bootstrap target is held fixed, so only the
        // predicted entry moves. Updating the target entry as well couples
        // neighbouring states destructively and stalls value propagation
        // through long episodes.
        q[2 * tr.state + tr.action] += scale * (target - q_sa);
      }
    }
  }
  (void)model;
}

BootDqnAgent::BootDqnAgent(int grid_size,
                           std::shared_ptr<const GibbsPrior> prior,
                           const AgentConfig& cfg, uint64_t seed)
    : model_(grid_size), prior_(std::move(prior)), cfg_(cfg), rng_(seed) {
  ensemble_ = init_ensemble(prior_.get(), cfg_.ensemble_size, cfg_, rng_);
}

void BootDqnAgent::begin_episode() {
  std::uniform_int_distribution<int> pick(0, ensemble_.size() - 1);
  active_member_ = pick(rng_);
}

int BootDqnAgent::act(int state) {
  const Eigen::VectorXd& q = ensemble_.members[static_cast<size_t>(active_member_)];
  double values[2] = {q[2 * state], q[2 * state + 1]};
  return argmax_with_uniform_ties(values, 2, rng_);
}

void BootDqnAgent::observe(const Transition& tr) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  uint32_t mask = 0;
  for (int m = 0; m < ensemble_.size(); ++m)
    if (unif(rng_) < cfg_.mask_rate) mask |= 1u << m;
  replay_.push_back({tr, mask});
}

void BootDqnAgent::end_episode() {
  bootdqn_update(ensemble_, replay_, model_, cfg_, rng_);
}

std::unique_ptr<Agent> make_deepsea_agent(
    const std::string& kind, int grid_size,
    std::shared_ptr<const GibbsPrior> prior, const AgentConfig& cfg,
    uint64_t seed) {
  if (kind == "experior-bootdqn") {
    if (!prior) throw std::invalid_argument("experior-bootdqn needs a prior");
    return std::make_unique<BootDqnAgent>(grid_size, std::move(prior), cfg,
                                          seed);
  }
  if (kind == "naive-bootdqn") {
    auto empty = std::make_shared<GibbsPrior>(
        GibbsPrior::empty(std::make_shared<DeepSeaQModel>(grid_size)));
    return std::make_unique<BootDqnAgent>(grid_size, std::move(empty), cfg,
                                          seed);
  }
  throw std::invalid_argument("unknown deep sea agent kind: " + kind);
}

}  // namespace experior
