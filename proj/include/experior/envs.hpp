#pragma once

#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "experior/domain.hpp"
#include "experior/rng.hpp"

namespace experior {

// ---------------------------------------------------------------------------
// Environment specs
// ---------------------------------------------------------------------------

struct BernoulliBanditSpec {
  int num_arms = 2;
  EnvSignature signature() const { return EnvSignature::bandit(num_arms); }
};

/**
 * Finite-context linear bandit: Q(s,a) = phi(s,a)^T theta with a fixed
 * feature table. Contexts are drawn uniformly.
 */
struct LinearBanditSpec {
  int num_contexts = 1;
  int num_actions = 2;
  int feature_dim = 1;
  std::vector<double> features;  // [context][action][dim], row-major

  const double* phi(int context, int action) const {
    return features.data() +
           (static_cast<size_t>(context) * num_actions + action) * feature_dim;
  }
  EnvSignature signature() const {
    return EnvSignature::linear(num_contexts, num_actions, feature_dim);
  }
};

enum class GoalDistributionKind { Corner, RightQuarter, RightHalf, Uniform };

/**
 * Deep Sea: an MxM grid descended one row per step from the top-left cell.
 * Action 1 (right) moves the column right at a small cost, action 0 (left)
 * moves it left for free; both clamp at the grid edge. A treasure worth +1
 * sits at the bottom of one goal column and is collected by taking `right`
 * from that cell. The episode ends after M steps.
 */
struct DeepSeaSpec {
  int grid_size = 2;
  double move_cost = 0.005;        // defaults to 0.01 / grid_size
  std::vector<double> goal_probs;  // categorical over goal columns

  static DeepSeaSpec make(int grid_size, GoalDistributionKind kind,
                          double move_cost = -1.0);

  int num_grid_states() const { return grid_size * grid_size; }
  int state_id(int row, int col) const { return row * grid_size + col; }
  int terminal_id(int col) const { return grid_size * grid_size + col; }
  EnvSignature signature() const { return EnvSignature::deep_sea(grid_size); }
};

inline constexpr int kDeepSeaLeft = 0;
inline constexpr int kDeepSeaRight = 1;

struct DeepSeaStepResult {
  int next_row = 0;
  int next_col = 0;
  double reward = 0.0;
  bool done = false;
};

DeepSeaStepResult deep_sea_step(const DeepSeaSpec& spec, int row, int col,
                                int action, int goal);

struct DeepSeaSolution {
  TaskParam q;    // length 2 * M * M, entries q[2*(row*M+col) + action]
  double v_star;  // optimal return from the start cell
};

/** Exact optimal Q for a fixed goal column, by backward induction. */
DeepSeaSolution solve_deep_sea_q(const DeepSeaSpec& spec, int goal);

// ---------------------------------------------------------------------------
// Task distributions
// ---------------------------------------------------------------------------

enum class TaskDistributionKind { BetaProduct, PointMass, CategoricalGoal };

/**
 * Distribution over unobserved task parameters. Bandits use independent
 * per-arm Beta laws or a point mass; Deep Sea uses a categorical over goal
 * columns, with the task parameter being the optimal Q-table for the drawn
 * goal.
 */
struct TaskDistribution {
  TaskDistributionKind kind = TaskDistributionKind::BetaProduct;
  std::vector<std::pair<double, double>> beta_params;  // BetaProduct
  TaskParam point;                                     // PointMass
  DeepSeaSpec deep_sea;                                // CategoricalGoal

  static TaskDistribution beta_product(
      std::vector<std::pair<double, double>> params);
  static TaskDistribution point_mass(TaskParam theta);
  static TaskDistribution categorical_goal(DeepSeaSpec spec);

  int num_arms() const;
};

/** Per-arm Beta parameters drawn i.i.d. uniformly from [0.05, 4]. */
TaskDistribution sample_beta_product_distribution(int num_arms, Rng& rng);

double sample_beta(double a, double b, Rng& rng);
TaskParam sample_task(const TaskDistribution& dist, Rng& rng);
int sample_deep_sea_goal(const DeepSeaSpec& spec, Rng& rng);

/** One Bernoulli reward draw for the given arm. */
double bernoulli_pull(const TaskParam& theta, int arm, Rng& rng);

// ---------------------------------------------------------------------------
// Q models: map a task parameter to per-state action values
// ---------------------------------------------------------------------------

class QModel {
 public:
  virtual ~QModel() = default;
  virtual int num_states() const = 0;
  virtual int num_actions() const = 0;
  virtual int param_dim() const = 0;
  virtual void q_values(const TaskParam& theta, int state,
                        double* out) const = 0;
  /** Adds coeff * dQ(state,action)/dtheta to grad (length param_dim). */
  virtual void accumulate_q_grad(const TaskParam& theta, int state, int action,
                                 double coeff, double* grad) const = 0;
};

/** K-armed bandit: a single dummy state, Q(0,a) = theta_a. */
class BanditQModel : public QModel {
 public:
  explicit BanditQModel(int num_arms) : num_arms_(num_arms) {}
  int num_states() const override { return 1; }
  int num_actions() const override { return num_arms_; }
  int param_dim() const override { return num_arms_; }
  void q_values(const TaskParam& theta, int state, double* out) const override;
  void accumulate_q_grad(const TaskParam& theta, int state, int action,
                         double coeff, double* grad) const override;

 private:
  int num_arms_;
};

/** Tabular Deep Sea: theta is the flattened in-grid Q-table. */
class DeepSeaQModel : public QModel {
 public:
  explicit DeepSeaQModel(int grid_size) : grid_size_(grid_size) {}
  int num_states() const override { return grid_size_ * grid_size_; }
  int num_actions() const override { return 2; }
  int param_dim() const override { return 2 * grid_size_ * grid_size_; }
  void q_values(const TaskParam& theta, int state, double* out) const override;
  void accumulate_q_grad(const TaskParam& theta, int state, int action,
                         double coeff, double* grad) const override;

 private:
  int grid_size_;
};

/** Linear-contextual bandit: Q(s,a) = phi(s,a)^T theta. */
class LinearQModel : public QModel {
 public:
  explicit LinearQModel(LinearBanditSpec spec) : spec_(std::move(spec)) {}
  int num_states() const override { return spec_.num_contexts; }
  int num_actions() const override { return spec_.num_actions; }
  int param_dim() const override { return spec_.feature_dim; }
  void q_values(const TaskParam& theta, int state, double* out) const override;
  void accumulate_q_grad(const TaskParam& theta, int state, int action,
                         double coeff, double* grad) const override;

 private:
  LinearBanditSpec spec_;
};

std::shared_ptr<const QModel> make_q_model(const EnvSignature& sig);

// ---------------------------------------------------------------------------
// Expert behaviour
// ---------------------------------------------------------------------------

inline constexpr double kBetaInf = std::numeric_limits<double>::infinity();

/**
 * Noisily rational action law: softmax(beta * q). beta = inf selects the
 * exact argmax set with ties split uniformly.
 */
void expert_policy(const double* q, int n, double beta, double* probs_out);
std::vector<double> expert_policy(const std::vector<double>& q, double beta);

/** Expert action probabilities at one state under a task parameter. */
std::vector<double> expert_policy(const QModel& model, const TaskParam& theta,
                                  int state, double beta);

/**
 * Draws n demonstrations. Each demo samples a fresh task from the
 * distribution and rolls the noisily rational expert through the
 * environment.
 */
DemoDataset generate_demos(const TaskDistribution& dist, double beta, int n,
                           uint64_t seed);

/**
 * Entropy (nats) of the identity of the optimal behaviour under the task
 * distribution: for bandits the Monte Carlo entropy of argmax_k theta_k with
 * ties split evenly; for Deep Sea the exact entropy of the goal categorical.
 */
double optimal_action_entropy(const TaskDistribution& dist, int mc_samples,
                              uint64_t seed);

}  // namespace experior
