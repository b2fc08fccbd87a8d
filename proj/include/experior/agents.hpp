#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "experior/domain.hpp"
#include "experior/envs.hpp"
#include "experior/maxent.hpp"
#include "experior/rng.hpp"
#include "experior/sampling.hpp"

namespace experior {

// ---------------------------------------------------------------------------
// Decision rules (pure functions, unit-testable in isolation)
// ---------------------------------------------------------------------------

/** UCB1: unpulled arms first (lowest index), else argmax mean + sqrt(2 ln t / n). */
int naive_ucb_act(const std::vector<int>& counts,
                  const std::vector<double>& means, int t);

/**
 * UCB1 over online pulls merged with demo pseudo-observations. While any
 * arm is unpulled online the rule matches naive_ucb_act exactly (so with
 * zero demos the two agents are identical action-for-action). Afterwards
 * each demo of arm a contributes a pseudo-reward min(1, UCB1 index of a
 * from online data alone), recomputed every episode.
 */
int ucb_explore_act(const std::vector<int>& demo_counts,
                    const std::vector<int>& counts,
                    const std::vector<double>& means, int t);

/** Thompson draw from the exact conjugate posterior Beta(a+succ, b+fail). */
int oracle_ts_act(const std::vector<std::pair<double, double>>& beta_params,
                  const std::vector<double>& successes,
                  const std::vector<int>& counts, Rng& rng);

/** Empirical distribution of demo actions over K arms. */
std::vector<double> bc_distribution(const DemoDataset& demos, int num_arms);

int argmax_with_uniform_ties(const double* values, int n, Rng& rng);

// ---------------------------------------------------------------------------
// Sequential agent interface
// ---------------------------------------------------------------------------

/**
 * Common interface: the harness announces episode boundaries, asks for one
 * action per state and feeds back rewards. Agents never see the task
 * parameter.
 */
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin_episode() {}
  virtual int act(int state) = 0;
  virtual void observe(const Transition& tr) = 0;
  virtual void end_episode() {}
};

struct AgentConfig {
  SgldConfig sgld;            // posterior-sampling agents
  double base_sigma = 1.0;    // Gaussian base measure over Q tables
  int ensemble_size = 8;      // bootstrapped ensemble
  double mask_rate = 0.8;     // per-transition bootstrap keep probability
  double learning_rate = 0.05;
  int grad_steps = 32;        // TD steps per episode
  int batch_size = 128;       // replay minibatch size
  double init_sigma = 0.1;    // ensemble init scale without a prior
  int init_sgld_steps = 2000; // per-member SGLD steps when a prior is given
  double init_sgld_step_size = 5e-4;
  // Per-component cap on the init target's gradient (<= 0 disables). The
  // fitted prior's density has a thin, steep shell between the flat region
  // and its demo-consistent mode; an explicit-Euler step through that shell
  // can overshoot by orders of magnitude without this cap.
  double init_grad_clip = 20.0;
  // Chain warm-up for the posterior-sampling bandit agent: at construction
  // the chain is advanced this many SGLD steps on the no-data target so the
  // first episodes already draw from near the prior rather than from the
  // cold-start transient.
  int ts_burn_in_steps = 2000;
  double ts_burn_in_step_size = 1e-2;
};

/**
 * Bandit agents. kind is one of: experior-ts, naive-ts, naive-ucb, bc,
 * oracle-ts, ucb-explore. naive-ts is constructed as experior-ts with an
 * empty prior, which makes the reduction identity hold by construction.
 */
std::unique_ptr<Agent> make_bandit_agent(
    const std::string& kind, int num_arms,
    std::shared_ptr<const GibbsPrior> prior, const TaskDistribution* task_dist,
    const DemoDataset* demos, const AgentConfig& cfg, uint64_t seed);

// ---------------------------------------------------------------------------
// Bootstrapped ensemble Q-learning for Deep Sea
// ---------------------------------------------------------------------------

struct EnsembleState {
  std::vector<Eigen::VectorXd> members;  // one flattened Q table each
  int size() const { return static_cast<int>(members.size()); }
};

/**
 * Draws the initial ensemble: independent SGLD chains on the fitted prior
 * when one is given, otherwise i.i.d. Gaussian(0, init_sigma^2) tables.
 */
EnsembleState init_ensemble(const GibbsPrior* prior, int size,
                            const AgentConfig& cfg, Rng& rng);

struct ReplayItem {
  Transition tr;
  uint32_t mask = 0;  // bit m set: member m trains on this transition
};

/**
 * TD updates on the squared Bellman residual, minibatched over the replay
 * buffer. Gradients flow through both Q terms; transitions whose bootstrap
 * mask excludes a member contribute zero to that member.
 */
void bootdqn_update(EnsembleState& ensemble, const std::vector<ReplayItem>& replay,
                    const DeepSeaQModel& model, const AgentConfig& cfg,
                    Rng& rng);

class BootDqnAgent : public Agent {
 public:
  BootDqnAgent(int grid_size, std::shared_ptr<const GibbsPrior> prior,
               const AgentConfig& cfg, uint64_t seed);

  void begin_episode() override;
  int act(int state) override;
  void observe(const Transition& tr) override;
  void end_episode() override;

  const EnsembleState& ensemble() const { return ensemble_; }

 private:
  DeepSeaQModel model_;
  std::shared_ptr<const GibbsPrior> prior_;  // keeps the prior alive
  AgentConfig cfg_;
  EnsembleState ensemble_;
  std::vector<ReplayItem> replay_;
  int active_member_ = 0;
  Rng rng_;
};

std::unique_ptr<Agent> make_deepsea_agent(const std::string& kind,
                                          int grid_size,
                                          std::shared_ptr<const GibbsPrior> prior,
                                          const AgentConfig& cfg,
                                          uint64_t seed);

}  // namespace experior
