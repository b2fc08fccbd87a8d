#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "experior/domain.hpp"
#include "experior/envs.hpp"
#include "experior/rng.hpp"

namespace experior {

using TaskSampler = std::function<TaskParam(Rng&)>;

TaskSampler make_uniform_box_sampler(int dim);
TaskSampler make_gaussian_sampler(int dim, double sigma);

/**
 * Log-probability of an expert trajectory under task parameter theta:
 * the sum over steps of ln softmax(beta * Q(s_h, .; theta))[a_h].
 * beta = inf scores argmax actions as ln(1/ties) and everything else as
 * -inf.
 */
double traj_log_likelihood(const Trajectory& traj, const TaskParam& theta,
                           const QModel& model, double beta);

/**
 * Feature matrix of the demo set against reference draws from the
 * uninformative prior: entry (j, i) holds m_i(theta_j), the likelihood of
 * demo i under reference sample j. Values below exp(-690) clamp to zero.
 */
struct FeatureMatrix {
  Eigen::MatrixXd values;                  // S x N
  std::vector<TaskParam> reference_samples;

  int num_samples() const { return static_cast<int>(values.rows()); }
  int num_demos() const { return static_cast<int>(values.cols()); }
};

FeatureMatrix build_feature_matrix(const DemoDataset& demos,
                                   const TaskSampler& mu0, int num_samples,
                                   double beta, const QModel& model,
                                   uint64_t seed);

/**
 * Monte Carlo dual of the constrained max-entropy problem:
 *   -logsumexp_j(m_j^T alpha - ln S) + (lambda/N) * sum_i ln(N alpha_i / lambda).
 * Concave in alpha; -inf if any alpha_i <= 0 while lambda > 0. The barrier
 * term vanishes identically at lambda = 0.
 */
double dual_objective(const Eigen::VectorXd& alpha, const FeatureMatrix& fm,
                      double lambda_star);

/** Gradient of dual_objective: -E_w[m] + (lambda/N) ./ alpha. */
Eigen::VectorXd dual_gradient(const Eigen::VectorXd& alpha,
                              const FeatureMatrix& fm, double lambda_star);

/**
 * Mean demo log marginal-likelihood (1/N) sum_i ln E_w[m_i] under the
 * self-normalized weights w_j proportional to exp(m_j^T alpha). Used to
 * check that fitting improves data fit over uniform weights.
 */
double demo_fit_score(const FeatureMatrix& fm, const Eigen::VectorXd& alpha);

struct FitOptions {
  double lambda_star = 0.1;
  double beta = kBetaInf;  // expert temperature used for the features
  double beta_eff = 10.0;  // finite temperature used by the fitted density
  int reference_samples = 4096;
  int iterations = 2000;
  double step_size = 0.05;
  uint64_t seed = 0;
};

struct FitReport {
  std::vector<double> dual_trace;  // initial value, then one per iteration
  double final_dual = 0.0;
  double final_grad_norm = 0.0;
};

/**
 * Fitted max-entropy prior over task parameters. Its unnormalized log
 * density is linear in the demo likelihoods:
 *   log mu(theta) = sum_i alpha_i * m_i(theta)   (up to a constant),
 * evaluated at the finite temperature beta_eff so it stays differentiable.
 * Duplicate demo trajectories are merged with their alphas summed.
 */
struct GibbsPrior {
  Eigen::VectorXd alpha;  // one weight per demo, all > 0 when lambda > 0
  double lambda_star = 0.1;
  double beta = kBetaInf;
  double beta_eff = 10.0;
  std::string env_signature;
  std::string demo_hash;
  std::shared_ptr<const QModel> model;

  // Deduplicated trajectories with summed alpha, built by finalize().
  std::vector<Trajectory> groups;
  std::vector<double> group_alpha;

  static GibbsPrior empty(std::shared_ptr<const QModel> model,
                          double beta_eff = 10.0);

  bool is_empty() const { return groups.empty(); }
  int num_demos() const { return static_cast<int>(alpha.size()); }

  /** Rebuilds the dedupe groups from demos + alpha. */
  void finalize(const DemoDataset& demos);

  /**
   * Unnormalized log density (and gradient, if grad != nullptr) of the
   * prior at theta. An empty prior evaluates to exactly zero.
   */
  double eval(const TaskParam& theta, Eigen::VectorXd* grad) const;
};

struct FitResult {
  GibbsPrior prior;
  FitReport report;
};

/**
 * Fits the max-entropy prior: builds the feature matrix at the expert
 * temperature, then maximizes the dual over alpha by adaptive gradient
 * ascent on ln(alpha). Throws if the objective turns non-finite.
 */
FitResult fit_prior(const DemoDataset& demos, const TaskSampler& mu0,
                    std::shared_ptr<const QModel> model,
                    const FitOptions& opts);

double log_prior_pdf(const GibbsPrior& prior, const TaskParam& theta);
Eigen::VectorXd grad_log_prior(const GibbsPrior& prior,
                               const TaskParam& theta);

struct NormalizationCheck {
  double normalized_sum = 1.0;  // self-normalized weight total, exactly 1
  double ess_ratio = 1.0;       // effective sample size / S
};

/**
 * Draws fresh reference samples and importance-weights them by the prior
 * density. ess_ratio near 1 means the prior barely reshapes mu0; small
 * values mean it concentrates.
 */
NormalizationCheck prior_normalization_check(const GibbsPrior& prior,
                                             const TaskSampler& mu0,
                                             int num_samples, uint64_t seed);

/** Prior (de)serialization. Loading revalidates the demo-file hash. */
std::string prior_to_json(const GibbsPrior& prior);
GibbsPrior prior_from_json(const std::string& json_text,
                           const DemoDataset& demos,
                           std::shared_ptr<const QModel> model);

}  // namespace experior
