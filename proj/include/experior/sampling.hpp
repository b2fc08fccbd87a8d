#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "experior/domain.hpp"
#include "experior/maxent.hpp"
#include "experior/rng.hpp"

namespace experior {

enum class Parameterization {
  Unconstrained,  // theta = xi
  LogitBox,       // theta = sigmoid(xi) maps R^K onto (0,1)^K
};

/**
 * Differentiable unnormalized log density over task parameters. eval
 * receives theta and may be asked for the gradient in theta; the sampler
 * passes a zero-initialized gradient buffer of length dim, so targets may
 * assign or accumulate. The logit-box Jacobian is added by the sampler
 * itself when that parameterization is chosen.
 */
struct LogDensity {
  int dim = 0;
  Parameterization parameterization = Parameterization::Unconstrained;
  std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd* grad)>
      eval;
};

struct SgldConfig {
  double step_size = 1e-3;
  int steps = 200;
  int thinning = 1;
  double temperature = 1.0;
};

/**
 * Stochastic gradient Langevin dynamics in the unconstrained coordinate:
 *   xi <- xi + (eta/2) grad log p(xi) + sqrt(eta * temperature) N(0, I).
 * Histories here are small enough that the full gradient is used; the
 * injected noise alone provides the stochasticity. Returns every
 * `thinning`-th iterate mapped back to theta space and leaves the final
 * chain state in xi. steps = 0 returns just the initial point.
 */
std::vector<Eigen::VectorXd> sgld_sample(const LogDensity& target,
                                         const SgldConfig& cfg,
                                         Eigen::VectorXd& xi, Rng& rng);

Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta,
                                 Parameterization param);
Eigen::VectorXd to_task_space(const Eigen::VectorXd& xi,
                              Parameterization param);

/** Per-arm success/pull counts; the Bernoulli likelihood needs nothing else. */
struct BanditStats {
  std::vector<double> successes;
  std::vector<int> counts;

  explicit BanditStats(int num_arms = 0)
      : successes(static_cast<size_t>(num_arms), 0.0),
        counts(static_cast<size_t>(num_arms), 0) {}
  void observe(int arm, double reward) {
    successes[static_cast<size_t>(arm)] += reward;
    counts[static_cast<size_t>(arm)] += 1;
  }
  static BanditStats from_history(const OnlineHistory& history, int num_arms);
};

/**
 * Unnormalized bandit log posterior: Bernoulli log likelihood of the
 * observed pulls plus the fitted prior's log density. The uniform base
 * measure on [0,1]^K enters through the sampler's logit-box Jacobian, not
 * here.
 */
double bandit_log_posterior(const TaskParam& theta, const OnlineHistory& history,
                            const GibbsPrior& prior);
double bandit_log_posterior(const Eigen::VectorXd& theta,
                            const BanditStats& stats, const GibbsPrior& prior,
                            Eigen::VectorXd* grad);

/**
 * Unnormalized MDP log posterior: the squared Bellman-residual likelihood
 *   -1/2 sum (r + max_a' Q(s',a') - Q(s,a))^2
 * over all observed transitions (the max term drops on terminal steps) plus
 * the fitted prior's log density. Gradients flow through both Q terms of
 * each residual. The Gaussian base measure over Q tables is added by
 * make_mdp_posterior_target, not here.
 */
double mdp_log_posterior(const TaskParam& theta, const OnlineHistory& history,
                         const GibbsPrior& prior);
double mdp_log_posterior(const Eigen::VectorXd& theta,
                         const OnlineHistory& history, const GibbsPrior& prior,
                         Eigen::VectorXd* grad);

LogDensity make_bandit_posterior_target(const GibbsPrior& prior,
                                        const BanditStats& stats);
LogDensity make_mdp_posterior_target(const GibbsPrior& prior,
                                     const OnlineHistory& history,
                                     double base_sigma);

/** Persistent SGLD chain reused across episodes. */
struct SgldChain {
  Eigen::VectorXd xi;
  bool initialized = false;
};

/**
 * One approximate posterior draw: warm-starts from the chain (initializing
 * it from the base measure on first use), advances cfg.steps SGLD steps on
 * the target and returns the final iterate in theta space.
 */
TaskParam posterior_sample(const LogDensity& target, const SgldConfig& cfg,
                           SgldChain& chain, Rng& rng, double base_sigma = 1.0);

}  // namespace experior
