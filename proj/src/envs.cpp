#include "experior/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace experior {

// ---------------------------------------------------------------------------
// Deep Sea
// ---------------------------------------------------------------------------

DeepSeaSpec DeepSeaSpec::make(int grid_size, GoalDistributionKind kind,
                              double move_cost) {
  if (grid_size < 2) throw std::invalid_argument("grid size must be >= 2");
  DeepSeaSpec spec;
  spec.grid_size = grid_size;
  spec.move_cost = move_cost >= 0.0 ? move_cost : 0.01 / grid_size;
  spec.goal_probs.assign(static_cast<size_t>(grid_size), 0.0);
  int span = 0;
  switch (kind) {
    case GoalDistributionKind::Corner:
      span = 1;
      break;
    case GoalDistributionKind::RightQuarter:
      span = std::max(1, grid_size / 4);
      break;
    case GoalDistributionKind::RightHalf:
      span = std::max(1, grid_size / 2);
      break;
    case GoalDistributionKind::Uniform:
      span = grid_size;
      break;
  }
  for (int g = grid_size - span; g < grid_size; ++g)
    spec.goal_probs[static_cast<size_t>(g)] = 1.0 / span;
  return spec;
}

DeepSeaStepResult deep_sea_step(const DeepSeaSpec& spec, int row, int col,
                                int action, int goal) {
  const int m = spec.grid_size;
  if (row < 0 || row >= m || col < 0 || col >= m)
    throw std::out_of_range("deep sea state out of range");
  if (action != kDeepSeaLeft && action != kDeepSeaRight)
    throw std::out_of_range("deep sea action must be 0 or 1");

  DeepSeaStepResult r;
  const int delta = action == kDeepSeaRight ? 1 : -1;
  r.next_col = std::clamp(col + delta, 0, m - 1);
  r.next_row = row + 1;
  r.done = r.next_row == m;
  r.reward = 0.0;
  if (action == kDeepSeaRight) {
    r.reward -= spec.move_cost;
    // The treasure is collected by taking `right` from the goal cell in the
    // bottom row.
    if (row == m - 1 && col == goal) r.reward += 1.0;
  }
  return r;
}

DeepSeaSolution solve_deep_sea_q(const DeepSeaSpec& spec, int goal) {
  const int m = spec.grid_size;
  if (goal < 0 || goal >= m) throw std::out_of_range("goal column out of range");
  DeepSeaSolution sol;
  sol.q.values.assign(static_cast<size_t>(2 * m * m), 0.0);
  for (int row = m - 1; row >= 0; --row) {
    for (int col = 0; col < m; ++col) {
      for (int action = 0; action < 2; ++action) {
        DeepSeaStepResult step = deep_sea_step(spec, row, col, action, goal);
        double value = step.reward;
        if (!step.done) {
          const int next = spec.state_id(step.next_row, step.next_col);
          value += std::max(sol.q[2 * next], sol.q[2 * next + 1]);
        }
        sol.q[2 * spec.state_id(row, col) + action] = value;
      }
    }
  }
  sol.v_star = std::max(sol.q[0], sol.q[1]);
  return sol;
}

// ---------------------------------------------------------------------------
// Task distributions
// ---------------------------------------------------------------------------

TaskDistribution TaskDistribution::beta_product(
    std::vector<std::pair<double, double>> params) {
  for (const auto& [a, b] : params)
    if (a <= 0.0 || b <= 0.0)
      throw std::invalid_argument("beta parameters must be positive");
  TaskDistribution d;
  d.kind = TaskDistributionKind::BetaProduct;
  d.beta_params = std::move(params);
  return d;
}

TaskDistribution TaskDistribution::point_mass(TaskParam theta) {
  TaskDistribution d;
  d.kind = TaskDistributionKind::PointMass;
  d.point = std::move(theta);
  return d;
}

TaskDistribution TaskDistribution::categorical_goal(DeepSeaSpec spec) {
  double total = std::accumulate(spec.goal_probs.begin(),
                                 spec.goal_probs.end(), 0.0);
  if (spec.goal_probs.size() != static_cast<size_t>(spec.grid_size) ||
      std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("goal distribution must sum to 1");
  TaskDistribution d;
  d.kind = TaskDistributionKind::CategoricalGoal;
  d.deep_sea = std::move(spec);
  return d;
}

int TaskDistribution::num_arms() const {
  switch (kind) {
    case TaskDistributionKind::BetaProduct:
      return static_cast<int>(beta_params.size());
    case TaskDistributionKind::PointMass:
      return point.size();
    case TaskDistributionKind::CategoricalGoal:
      return 2;
  }
  throw std::logic_error("unreachable");
}

TaskDistribution sample_beta_product_distribution(int num_arms, Rng& rng) {
  // Clamp away from zero: Beta parameters must stay positive.
  std::uniform_real_distribution<double> unif(0.05, 4.0);
  std::vector<std::pair<double, double>> params;
  params.reserve(static_cast<size_t>(num_arms));
  for (int k = 0; k < num_arms; ++k) {
    double a = unif(rng);
    double b = unif(rng);
    params.emplace_back(a, b);
  }
  return TaskDistribution::beta_product(std::move(params));
}

double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  double x = ga(rng);
  double y = gb(rng);
  double s = x + y;
  if (s <= 0.0) return 0.5;  // both gammas underflowed; a,b are tiny
  return x / s;
}

TaskParam sample_task(const TaskDistribution& dist, Rng& rng) {
  switch (dist.kind) {
    case TaskDistributionKind::BetaProduct: {
      TaskParam theta;
      theta.values.reserve(dist.beta_params.size());
      for (const auto& [a, b] : dist.beta_params)
        theta.values.push_back(sample_beta(a, b, rng));
      return theta;
    }
    case TaskDistributionKind::PointMass:
      return dist.point;
    case TaskDistributionKind::CategoricalGoal: {
      int goal = sample_deep_sea_goal(dist.deep_sea, rng);
      return solve_deep_sea_q(dist.deep_sea, goal).q;
    }
  }
  throw std::logic_error("unreachable");
}

int sample_deep_sea_goal(const DeepSeaSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  for (size_t g = 0; g < spec.goal_probs.size(); ++g) {
    acc += spec.goal_probs[g];
    if (u <= acc) return static_cast<int>(g);
  }
  return spec.grid_size - 1;
}

double bernoulli_pull(const TaskParam& theta, int arm, Rng& rng) {
  if (arm < 0 || arm >= theta.size())
    throw std::out_of_range("arm index out of range");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng) < theta[arm] ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Q models
// ---------------------------------------------------------------------------

void BanditQModel::q_values(const TaskParam& theta, int state,
                            double* out) const {
  (void)state;
  for (int a = 0; a < num_arms_; ++a) out[a] = theta[a];
}

void BanditQModel::accumulate_q_grad(const TaskParam& theta, int state,
                                     int action, double coeff,
                                     double* grad) const {
  (void)theta;
  (void)state;
  grad[action] += coeff;
}

void DeepSeaQModel::q_values(const TaskParam& theta, int state,
                             double* out) const {
  out[0] = theta[2 * state];
  out[1] = theta[2 * state + 1];
}

void DeepSeaQModel::accumulate_q_grad(const TaskParam& theta, int state,
                                      int action, double coeff,
                                      double* grad) const {
  (void)theta;
  grad[2 * state + action] += coeff;
}

void LinearQModel::q_values(const TaskParam& theta, int state,
                            double* out) const {
  for (int a = 0; a < spec_.num_actions; ++a) {
    const double* phi = spec_.phi(state, a);
    double v = 0.0;
    for (int d = 0; d < spec_.feature_dim; ++d) v += phi[d] * theta[d];
    out[a] = v;
  }
}

void LinearQModel::accumulate_q_grad(const TaskParam& theta, int state,
                                     int action, double coeff,
                                     double* grad) const {
  (void)theta;
  const double* phi = spec_.phi(state, action);
  for (int d = 0; d < spec_.feature_dim; ++d) grad[d] += coeff * phi[d];
}

std::shared_ptr<const QModel> make_q_model(const EnvSignature& sig) {
  switch (sig.family) {
    case EnvFamily::BernoulliBandit:
      return std::make_shared<BanditQModel>(sig.size);
    case EnvFamily::DeepSea:
      return std::make_shared<DeepSeaQModel>(sig.size);
    case EnvFamily::LinearBandit:
      throw std::invalid_argument(
          "linear bandit models need the full feature table, construct "
          "LinearQModel directly");
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Expert behaviour
// ---------------------------------------------------------------------------

void expert_policy(const double* q, int n, double beta, double* probs_out) {
  if (n <= 0) throw std::invalid_argument("empty action set");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");

  if (std::isinf(beta)) {
    double best = q[0];
    for (int a = 1; a < n; ++a) best = std::max(best, q[a]);
    int ties = 0;
    for (int a = 0; a < n; ++a)
      if (q[a] == best) ++ties;
    for (int a = 0; a < n; ++a) probs_out[a] = q[a] == best ? 1.0 / ties : 0.0;
    return;
  }

  double best = q[0];
  for (int a = 1; a < n; ++a) best = std::max(best, q[a]);
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    probs_out[a] = std::exp(beta * (q[a] - best));
    total += probs_out[a];
  }
  for (int a = 0; a < n; ++a) probs_out[a] /= total;
}

std::vector<double> expert_policy(const std::vector<double>& q, double beta) {
  std::vector<double> probs(q.size());
  expert_policy(q.data(), static_cast<int>(q.size()), beta, probs.data());
  return probs;
}

std::vector<double> expert_policy(const QModel& model, const TaskParam& theta,
                                  int state, double beta) {
  std::vector<double> q(static_cast<size_t>(model.num_actions()));
  model.q_values(theta, state, q.data());
  return expert_policy(q, beta);
}

namespace {

int sample_index(const std::vector<double>& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

DemoDataset generate_demos(const TaskDistribution& dist, double beta, int n,
                           uint64_t seed) {
  Rng rng = make_rng({seed, 0x64656d6fULL});
  DemoDataset demos;

  if (dist.kind == TaskDistributionKind::CategoricalGoal) {
    const DeepSeaSpec& spec = dist.deep_sea;
    DeepSeaQModel model(spec.grid_size);
    demos.env_signature = spec.signature().to_string();
    demos.horizon = spec.grid_size;
    for (int i = 0; i < n; ++i) {
      int goal = sample_deep_sea_goal(spec, rng);
      DeepSeaSolution sol = solve_deep_sea_q(spec, goal);
      Trajectory traj;
      int row = 0, col = 0;
      for (int h = 0; h < spec.grid_size; ++h) {
        int state = spec.state_id(row, col);
        auto probs = expert_policy(model, sol.q, state, beta);
        int action = sample_index(probs, rng);
        traj.steps.push_back({state, action});
        DeepSeaStepResult step = deep_sea_step(spec, row, col, action, goal);
        row = step.next_row;
        col = step.next_col;
      }
      traj.terminal_state = spec.terminal_id(col);
      demos.trajectories.push_back(std::move(traj));
    }
    return demos;
  }

  // Bandit families: one dummy state, one step per demonstration.
  const int num_arms = dist.num_arms();
  BanditQModel model(num_arms);
  demos.env_signature = EnvSignature::bandit(num_arms).to_string();
  demos.horizon = 1;
  for (int i = 0; i < n; ++i) {
    TaskParam theta = sample_task(dist, rng);
    auto probs = expert_policy(model, theta, 0, beta);
    int arm = sample_index(probs, rng);
    Trajectory traj;
    traj.steps.push_back({0, arm});
    traj.terminal_state = 0;
    demos.trajectories.push_back(std::move(traj));
  }
  return demos;
}

double optimal_action_entropy(const TaskDistribution& dist, int mc_samples,
                              uint64_t seed) {
  if (dist.kind == TaskDistributionKind::CategoricalGoal) {
    // The optimal trajectory class is determined by the goal column, so the
    // entropy is that of the goal categorical itself.
    double h = 0.0;
    for (double p : dist.deep_sea.goal_probs)
      if (p > 0.0) h -= p * std::log(p);
    return h;
  }

  if (mc_samples <= 0) throw std::invalid_argument("mc_samples must be > 0");
  Rng rng = make_rng({seed, 0x656e7472ULL});
  const int num_arms = dist.num_arms();
  std::vector<double> mass(static_cast<size_t>(num_arms), 0.0);
  for (int i = 0; i < mc_samples; ++i) {
    TaskParam theta = sample_task(dist, rng);
    double best = theta[0];
    for (int k = 1; k < num_arms; ++k) best = std::max(best, theta[k]);
    int ties = 0;
    for (int k = 0; k < num_arms; ++k)
      if (theta[k] == best) ++ties;
    for (int k = 0; k < num_arms; ++k)
      if (theta[k] == best) mass[static_cast<size_t>(k)] += 1.0 / ties;
  }
  double h = 0.0;
  for (double m : mass) {
    if (m <= 0.0) continue;
    double p = m / mc_samples;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace experior
