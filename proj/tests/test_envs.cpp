#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "experior/domain.hpp"
#include "experior/envs.hpp"
#include "experior/rng.hpp"

using namespace experior;

namespace {

// Independent oracle: best return over all 2^M deterministic action
// sequences, scored purely through the step function.
double brute_force_best_return(const DeepSeaSpec& spec, int goal) {
  const int m = spec.grid_size;
  double best = -1e18;
  for (int mask = 0; mask < (1 << m); ++mask) {
    int row = 0, col = 0;
    double total = 0.0;
    for (int h = 0; h < m; ++h) {
      const int action = (mask >> h) & 1;
      DeepSeaStepResult sr = deep_sea_step(spec, row, col, action, goal);
      total += sr.reward;
      row = sr.next_row;
      col = sr.next_col;
    }
    best = std::max(best, total);
  }
  return best;
}

double rollout_greedy(const DeepSeaSpec& spec, const TaskParam& q, int goal) {
  const int m = spec.grid_size;
  int row = 0, col = 0;
  double total = 0.0;
  for (int h = 0; h < m; ++h) {
    const int s = spec.state_id(row, col);
    const int action = q.values[2 * s + 1] > q.values[2 * s] ? 1 : 0;
    DeepSeaStepResult sr = deep_sea_step(spec, row, col, action, goal);
    total += sr.reward;
    row = sr.next_row;
    col = sr.next_col;
  }
  return total;
}

}  // namespace

TEST_CASE("deep sea dynamics: drift, clamping, treasure and termination") {
  DeepSeaSpec spec = DeepSeaSpec::make(3, GoalDistributionKind::Corner);
  CHECK(spec.move_cost == doctest::Approx(0.01 / 3));

  // Left from the left edge stays on column 0 and costs nothing.
  DeepSeaStepResult sr = deep_sea_step(spec, 0, 0, kDeepSeaLeft, 2);
  CHECK(sr.next_row == 1);
  CHECK(sr.next_col == 0);
  CHECK(sr.reward == 0.0);
  CHECK_FALSE(sr.done);

  // Right moves the column right and costs move_cost.
  sr = deep_sea_step(spec, 0, 0, kDeepSeaRight, 2);
  CHECK(sr.next_col == 1);
  CHECK(sr.reward == doctest::Approx(-spec.move_cost));

  // Right from the right edge clamps but still costs; no treasure above
  // the bottom row.
  sr = deep_sea_step(spec, 1, 2, kDeepSeaRight, 2);
  CHECK(sr.next_col == 2);
  CHECK(sr.reward == doctest::Approx(-spec.move_cost));
  CHECK_FALSE(sr.done);

  // The treasure pays only for `right` taken from the bottom goal cell.
  sr = deep_sea_step(spec, 2, 2, kDeepSeaRight, 2);
  CHECK(sr.reward == doctest::Approx(1.0 - spec.move_cost));
  CHECK(sr.done);
  sr = deep_sea_step(spec, 2, 2, kDeepSeaLeft, 2);
  CHECK(sr.reward == 0.0);
  CHECK(sr.done);
}

TEST_CASE("deep sea optimal value matches exhaustive search for small grids") {
  for (int m = 2; m <= 5; ++m) {
    DeepSeaSpec spec = DeepSeaSpec::make(m, GoalDistributionKind::Uniform);
    for (int goal = 0; goal < m; ++goal) {
      CAPTURE(m);
      CAPTURE(goal);
      DeepSeaSolution sol = solve_deep_sea_q(spec, goal);
      const double brute = brute_force_best_return(spec, goal);
      CHECK(sol.v_star == doctest::Approx(brute).epsilon(1e-12));
      // The DP's greedy policy must achieve its own value in the env.
      CHECK(rollout_greedy(spec, sol.q, goal) ==
            doctest::Approx(sol.v_star).epsilon(1e-12));
      // Reaching column g costs (g+1) right moves on the optimal path.
      CHECK(sol.v_star ==
            doctest::Approx(1.0 - (goal + 1) * spec.move_cost).epsilon(1e-12));
    }
  }
}

TEST_CASE("deep sea anchor: 2x2 grid with the goal in the far corner") {
  DeepSeaSpec spec = DeepSeaSpec::make(2, GoalDistributionKind::Corner);
  CHECK(spec.move_cost == doctest::Approx(0.005));
  DeepSeaSolution sol = solve_deep_sea_q(spec, 1);
  CHECK(sol.v_star == doctest::Approx(0.99));
  // Optimal play is right twice: -0.005 each step, +1 at the treasure.
  CHECK(sol.q.values[2 * spec.state_id(0, 0) + kDeepSeaRight] ==
        doctest::Approx(0.99));
  CHECK(sol.q.values[2 * spec.state_id(0, 0) + kDeepSeaLeft] <
        sol.q.values[2 * spec.state_id(0, 0) + kDeepSeaRight]);
}

TEST_CASE("goal distributions cover the intended column spans") {
  DeepSeaSpec corner = DeepSeaSpec::make(8, GoalDistributionKind::Corner);
  REQUIRE(corner.goal_probs.size() == 8);
  CHECK(corner.goal_probs[7] == doctest::Approx(1.0));
  for (int c = 0; c < 7; ++c) CHECK(corner.goal_probs[c] == 0.0);

  DeepSeaSpec quarter = DeepSeaSpec::make(8, GoalDistributionKind::RightQuarter);
  for (int c = 0; c < 6; ++c) CHECK(quarter.goal_probs[c] == 0.0);
  CHECK(quarter.goal_probs[6] == doctest::Approx(0.5));
  CHECK(quarter.goal_probs[7] == doctest::Approx(0.5));

  DeepSeaSpec half = DeepSeaSpec::make(8, GoalDistributionKind::RightHalf);
  for (int c = 0; c < 4; ++c) CHECK(half.goal_probs[c] == 0.0);
  for (int c = 4; c < 8; ++c) CHECK(half.goal_probs[c] == doctest::Approx(0.25));

  DeepSeaSpec uniform = DeepSeaSpec::make(8, GoalDistributionKind::Uniform);
  for (int c = 0; c < 8; ++c) {
    CHECK(uniform.goal_probs[c] == doctest::Approx(1.0 / 8));
  }
}

TEST_CASE("bernoulli pulls have the right frequency and support") {
  TaskParam theta;
  theta.values = {0.3, 0.85};
  Rng rng = make_rng({2024, 11});
  const int n = 20000;
  double sum0 = 0.0, sum1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r0 = bernoulli_pull(theta, 0, rng);
    const double r1 = bernoulli_pull(theta, 1, rng);
    CHECK((r0 == 0.0 || r0 == 1.0));
    sum0 += r0;
    sum1 += r1;
  }
  // 4-sigma Monte Carlo bands.
  CHECK(std::fabs(sum0 / n - 0.3) < 4 * std::sqrt(0.3 * 0.7 / n));
  CHECK(std::fabs(sum1 / n - 0.85) < 4 * std::sqrt(0.85 * 0.15 / n));
}

TEST_CASE("beta sampling matches its mean and the uniform special case") {
  Rng rng = make_rng({77, 1});
  const int n = 20000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += sample_beta(3.0, 1.0, rng);
  CHECK(std::fabs(acc / n - 0.75) < 0.01);

  // Beta(1,1) must be uniform: two-sided KS test at the 1% level.
  std::vector<double> xs(2000);
  for (double& x : xs) x = sample_beta(1.0, 1.0, rng);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double lo = static_cast<double>(i) / xs.size();
    const double hi = static_cast<double>(i + 1) / xs.size();
    ks = std::max(ks, std::max(std::fabs(xs[i] - lo), std::fabs(xs[i] - hi)));
  }
  CHECK(ks < 1.63 / std::sqrt(static_cast<double>(xs.size())));
}

TEST_CASE("noisily rational action law") {
  SUBCASE("probabilities sum to one and respect the temperature") {
    std::vector<double> q = {0.2, 0.5, 0.1};
    for (double beta : {0.0, 0.5, 2.0, 10.0}) {
      std::vector<double> p = expert_policy(q, beta);
      double total = 0.0;
      for (double v : p) total += v;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    // beta = 0 is uniform.
    std::vector<double> p0 = expert_policy(q, 0.0);
    for (double v : p0) CHECK(v == doctest::Approx(1.0 / 3));
    // Higher beta concentrates more mass on the argmax.
    double prev = 0.0;
    for (double beta : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      std::vector<double> p = expert_policy(q, beta);
      CHECK(p[1] > prev);
      prev = p[1];
    }
  }
  SUBCASE("matches a hand-computed softmax") {
    std::vector<double> p = expert_policy({0.0, 1.0}, 1.0);
    const double z = 1.0 + std::exp(1.0);
    CHECK(p[0] == doctest::Approx(1.0 / z).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  }
  SUBCASE("invariant to shifting all action values") {
    std::vector<double> p1 = expert_policy({0.1, 0.9, 0.4}, 3.0);
    std::vector<double> p2 = expert_policy({5.1, 5.9, 5.4}, 3.0);
    for (int i = 0; i < 3; ++i) {
      CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
    }
  }
  SUBCASE("infinite beta splits ties uniformly") {
    std::vector<double> p = expert_policy({0.7, 0.2, 0.7}, kBetaInf);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == 0.0);
    CHECK(p[2] == doctest::Approx(0.5));
  }
}

TEST_CASE("q models expose values and gradients consistently") {
  SUBCASE("bandit") {
    BanditQModel m(3);
    TaskParam theta;
    theta.values = {0.1, 0.7, 0.4};
    std::vector<double> q(3);
    m.q_values(theta, 0, q.data());
    for (int a = 0; a < 3; ++a) CHECK(q[a] == theta.values[a]);
    std::vector<double> g(3, 0.0);
    m.accumulate_q_grad(theta, 0, 1, 2.5, g.data());
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 2.5);
    CHECK(g[2] == 0.0);
  }
  SUBCASE("deep sea") {
    DeepSeaQModel m(2);
    TaskParam theta;
    theta.values = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> q(2);
    m.q_values(theta, 3, q.data());
    CHECK(q[0] == 7);
    CHECK(q[1] == 8);
    std::vector<double> g(8, 0.0);
    m.accumulate_q_grad(theta, 3, 0, 1.5, g.data());
    CHECK(g[6] == 1.5);
    double sum = 0.0;
    for (double v : g) sum += std::fabs(v);
    CHECK(sum == 1.5);
  }
  SUBCASE("linear") {
    LinearBanditSpec spec;
    spec.num_contexts = 2;
    spec.num_actions = 2;
    spec.feature_dim = 2;
    spec.features = {1, 0, 0, 1, 1, 1, 2, 0};  // [ctx][act][dim]
    LinearQModel m(spec);
    TaskParam theta;
    theta.values = {0.5, -0.25};
    std::vector<double> q(2);
    m.q_values(theta, 0, q.data());
    CHECK(q[0] == doctest::Approx(0.5));    // phi=(1,0)
    CHECK(q[1] == doctest::Approx(-0.25));  // phi=(0,1)
    m.q_values(theta, 1, q.data());
    CHECK(q[0] == doctest::Approx(0.25));   // phi=(1,1)
    CHECK(q[1] == doctest::Approx(1.0));    // phi=(2,0)
    std::vector<double> g(2, 0.0);
    m.accumulate_q_grad(theta, 1, 1, 1.0, g.data());
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(0.0));
  }
  SUBCASE("factory maps signatures to models") {
    auto b = make_q_model(EnvSignature::bandit(7));
    CHECK(b->param_dim() == 7);
    CHECK(b->num_states() == 1);
    auto d = make_q_model(EnvSignature::deep_sea(4));
    CHECK(d->param_dim() == 32);
    CHECK(d->num_states() == 16);
  }
}

TEST_CASE("bandit demo generation follows the expert law") {
  TaskParam point;
  point.values = {0.9, 0.1};
  TaskDistribution dist = TaskDistribution::point_mass(point);
  DemoDataset demos = generate_demos(dist, kBetaInf, 50, 99);
  CHECK(demos.env_signature == "bandit:2");
  CHECK(demos.horizon == 1);
  REQUIRE(demos.trajectories.size() == 50);
  for (const Trajectory& t : demos.trajectories) {
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0].state == 0);
    CHECK(t.steps[0].action == 0);  // arm 0 dominates, expert is exact
  }
  ValidationReport vr = validate_dataset(demos, EnvSignature::bandit(2));
  CHECK(vr.ok);

  // With beta = 0 the expert is uniform: both arms must appear.
  DemoDataset noisy = generate_demos(dist, 0.0, 200, 99);
  int count1 = 0;
  for (const Trajectory& t : noisy.trajectories) count1 += t.steps[0].action;
  CHECK(count1 > 50);
  CHECK(count1 < 150);
}

TEST_CASE("deep sea demo generation rolls the expert to the goal") {
  DeepSeaSpec spec = DeepSeaSpec::make(4, GoalDistributionKind::Corner);
  TaskDistribution dist = TaskDistribution::categorical_goal(spec);
  DemoDataset demos = generate_demos(dist, kBetaInf, 20, 7);
  CHECK(demos.env_signature == "deepsea:4");
  CHECK(demos.horizon == 4);
  REQUIRE(demos.trajectories.size() == 20);
  for (const Trajectory& t : demos.trajectories) {
    REQUIRE(t.steps.size() == 4);
    for (int h = 0; h < 4; ++h) {
      CHECK(t.steps[h].state == spec.state_id(h, h));  // diagonal descent
      CHECK(t.steps[h].action == kDeepSeaRight);
    }
    CHECK(t.terminal_state == spec.terminal_id(3));
  }
  ValidationReport vr = validate_dataset(demos, EnvSignature::deep_sea(4));
  CHECK(vr.ok);
}

TEST_CASE("optimal-behaviour entropy: exact anchors and Monte Carlo") {
  // Point mass: a single optimal arm, zero entropy.
  TaskParam point;
  point.values = {0.2, 0.9, 0.4};
  CHECK(optimal_action_entropy(TaskDistribution::point_mass(point), 1000, 3) ==
        doctest::Approx(0.0));

  // Two exchangeable arms: ln 2.
  TaskDistribution sym = TaskDistribution::beta_product({{1, 1}, {1, 1}});
  CHECK(optimal_action_entropy(sym, 20000, 5) ==
        doctest::Approx(std::log(2.0)).epsilon(0.03));

  // Deep sea entropies are exact.
  DeepSeaSpec uni = DeepSeaSpec::make(10, GoalDistributionKind::Uniform);
  CHECK(optimal_action_entropy(TaskDistribution::categorical_goal(uni), 0, 0) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  DeepSeaSpec corner = DeepSeaSpec::make(10, GoalDistributionKind::Corner);
  CHECK(optimal_action_entropy(TaskDistribution::categorical_goal(corner), 0,
                               0) == doctest::Approx(0.0));

  // A strongly separated beta product has one clear winner: low entropy.
  TaskDistribution sep =
      TaskDistribution::beta_product({{40, 1}, {1, 40}, {1, 40}});
  CHECK(optimal_action_entropy(sep, 20000, 9) < 0.2);
}

TEST_CASE("task sampling stays inside the unit box for beta products") {
  TaskDistribution dist = TaskDistribution::beta_product({{0.3, 2}, {4, 0.5}});
  Rng rng = make_rng({31337});
  for (int i = 0; i < 500; ++i) {
    TaskParam theta = sample_task(dist, rng);
    REQUIRE(theta.size() == 2);
    for (double v : theta.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(dist.num_arms() == 2);
}
