#include "experior/maxent.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace experior {

namespace {

constexpr double kLogUnderflow = -690.0;  // ln(1e-300), features clamp to 0

double logsumexp(const Eigen::VectorXd& x) {
  double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace

TaskSampler make_uniform_box_sampler(int dim) {
  return [dim](Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TaskParam theta;
    theta.values.reserve(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) theta.values.push_back(unif(rng));
    return theta;
  };
}

TaskSampler make_gaussian_sampler(int dim, double sigma) {
  return [dim, sigma](Rng& rng) {
    std::normal_distribution<double> normal(0.0, sigma);
    TaskParam theta;
    theta.values.reserve(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) theta.values.push_back(normal(rng));
    return theta;
  };
}

double traj_log_likelihood(const Trajectory& traj, const TaskParam& theta,
                           const QModel& model, double beta) {
  const int num_actions = model.num_actions();
  std::vector<double> q(static_cast<size_t>(num_actions));
  std::vector<double> probs(static_cast<size_t>(num_actions));
  double total = 0.0;
  for (const TrajectoryStep& st : traj.steps) {
    model.q_values(theta, st.state, q.data());
    expert_policy(q.data(), num_actions, beta, probs.data());
    double p = probs[static_cast<size_t>(st.action)];
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    total += std::log(p);
  }
  return total;
}

FeatureMatrix build_feature_matrix(const DemoDataset& demos,
                                   const TaskSampler& mu0, int num_samples,
                                   double beta, const QModel& model,
                                   uint64_t seed) {
  if (num_samples <= 0)
    throw std::invalid_argument("need at least one reference sample");
  const int n = demos.size();
  FeatureMatrix fm;
  fm.values.resize(num_samples, n);
  fm.reference_samples.reserve(static_cast<size_t>(num_samples));

  Rng rng = make_rng({seed, 0x66656174ULL});
  const int num_actions = model.num_actions();
  std::vector<double> q(static_cast<size_t>(num_actions));
  // Per-sample cache of action probabilities, keyed by state id.
  std::vector<std::vector<double>> probs_cache;
  std::vector<char> cached;

  for (int j = 0; j < num_samples; ++j) {
    TaskParam theta = mu0(rng);
    probs_cache.assign(static_cast<size_t>(model.num_states()), {});
    cached.assign(static_cast<size_t>(model.num_states()), 0);
    for (int i = 0; i < n; ++i) {
      double log_m = 0.0;
      for (const TrajectoryStep& st :
           demos.trajectories[static_cast<size_t>(i)].steps) {
        auto& probs = probs_cache[static_cast<size_t>(st.state)];
        if (!cached[static_cast<size_t>(st.state)]) {
          probs.resize(static_cast<size_t>(num_actions));
          model.q_values(theta, st.state, q.data());
          expert_policy(q.data(), num_actions, beta, probs.data());
          cached[static_cast<size_t>(st.state)] = 1;
        }
        double p = probs[static_cast<size_t>(st.action)];
        if (p <= 0.0) {
          log_m = -std::numeric_limits<double>::infinity();
          break;
        }
        log_m += std::log(p);
      }
      fm.values(j, i) = log_m < kLogUnderflow ? 0.0 : std::exp(log_m);
    }
    fm.reference_samples.push_back(std::move(theta));
  }
  return fm;
}

double dual_objective(const Eigen::VectorXd& alpha, const FeatureMatrix& fm,
                      double lambda_star) {
  const int n = fm.num_demos();
  if (alpha.size() != n)
    throw std::invalid_argument("alpha size does not match demo count");
  if (lambda_star < 0.0)
    throw std::invalid_argument("lambda_star must be >= 0");

  double barrier = 0.0;
  if (lambda_star > 0.0 && n > 0) {
    for (int i = 0; i < n; ++i) {
      if (alpha[i] <= 0.0) return -std::numeric_limits<double>::infinity();
      barrier += std::log(n * alpha[i] / lambda_star);
    }
    barrier *= lambda_star / n;
  }

  Eigen::VectorXd t = fm.values * alpha;
  t.array() -= std::log(static_cast<double>(fm.num_samples()));
  return -logsumexp(t) + barrier;
}

Eigen::VectorXd dual_gradient(const Eigen::VectorXd& alpha,
                              const FeatureMatrix& fm, double lambda_star) {
  const int n = fm.num_demos();
  if (alpha.size() != n)
    throw std::invalid_argument("alpha size does not match demo count");

  Eigen::VectorXd t = fm.values * alpha;
  double m = t.maxCoeff();
  Eigen::VectorXd w = (t.array() - m).exp();
  w /= w.sum();

  Eigen::VectorXd grad = -(fm.values.transpose() * w);
  if (lambda_star > 0.0)
    grad.array() += (lambda_star / n) / alpha.array();
  return grad;
}

double demo_fit_score(const FeatureMatrix& fm, const Eigen::VectorXd& alpha) {
  const int n = fm.num_demos();
  if (n == 0) return 0.0;
  Eigen::VectorXd t = fm.values * alpha;
  double m = t.maxCoeff();
  Eigen::VectorXd w = (t.array() - m).exp();
  w /= w.sum();
  Eigen::VectorXd marginals = fm.values.transpose() * w;
  double score = 0.0;
  for (int i = 0; i < n; ++i) score += std::log(marginals[i]);
  return score / n;
}

GibbsPrior GibbsPrior::empty(std::shared_ptr<const QModel> model,
                             double beta_eff) {
  GibbsPrior prior;
  prior.alpha.resize(0);
  prior.beta_eff = beta_eff;
  prior.model = std::move(model);
  return prior;
}

void GibbsPrior::finalize(const DemoDataset& demos) {
  if (demos.size() != static_cast<int>(alpha.size()))
    throw std::invalid_argument("alpha size does not match demo count");
  if (!(beta_eff > 0.0) || std::isinf(beta_eff))
    throw std::invalid_argument("beta_eff must be finite and positive");

  groups.clear();
  group_alpha.clear();
  std::map<std::vector<int>, size_t> index;
  for (int i = 0; i < demos.size(); ++i) {
    const Trajectory& traj = demos.trajectories[static_cast<size_t>(i)];
    std::vector<int> key;
    key.reserve(traj.steps.size() * 2);
    for (const TrajectoryStep& st : traj.steps) {
      key.push_back(st.state);
      key.push_back(st.action);
    }
    auto [it, inserted] = index.emplace(std::move(key), groups.size());
    if (inserted) {
      groups.push_back(traj);
      group_alpha.push_back(alpha[i]);
    } else {
      group_alpha[it->second] += alpha[i];
    }
  }
}

double GibbsPrior::eval(const TaskParam& theta, Eigen::VectorXd* grad) const {
  if (grad != nullptr) {
    grad->resize(model->param_dim());
    grad->setZero();
  }
  if (groups.empty()) return 0.0;

  const int num_actions = model->num_actions();
  std::vector<double> q(static_cast<size_t>(num_actions));
  std::vector<std::vector<double>> probs_cache(
      static_cast<size_t>(model->num_states()));
  std::vector<char> cached(static_cast<size_t>(model->num_states()), 0);

  auto probs_at = [&](int state) -> const std::vector<double>& {
    auto& probs = probs_cache[static_cast<size_t>(state)];
    if (!cached[static_cast<size_t>(state)]) {
      probs.resize(static_cast<size_t>(num_actions));
      model->q_values(theta, state, q.data());
      expert_policy(q.data(), num_actions, beta_eff, probs.data());
      cached[static_cast<size_t>(state)] = 1;
    }
    return probs;
  };

  double total = 0.0;
  for (size_t g = 0; g < groups.size(); ++g) {
    double log_m = 0.0;
    for (const TrajectoryStep& st : groups[g].steps) {
      double p = probs_at(st.state)[static_cast<size_t>(st.action)];
      if (p <= 0.0) {
        log_m = -std::numeric_limits<double>::infinity();
        break;
      }
      log_m += std::log(p);
    }
    if (log_m < kLogUnderflow) continue;  // group contributes nothing
    double m = std::exp(log_m);
    total += group_alpha[g] * m;
    if (grad == nullptr) continue;
    double coeff = group_alpha[g] * m * beta_eff;
    for (const TrajectoryStep& st : groups[g].steps) {
      const auto& probs = probs_at(st.state);
      model->accumulate_q_grad(theta, st.state, st.action, coeff,
                               grad->data());
      for (int a = 0; a < num_actions; ++a)
        model->accumulate_q_grad(theta, st.state, a,
                                 -coeff * probs[static_cast<size_t>(a)],
                                 grad->data());
    }
  }
  return total;
}

double log_prior_pdf(const GibbsPrior& prior, const TaskParam& theta) {
  return prior.eval(theta, nullptr);
}

Eigen::VectorXd grad_log_prior(const GibbsPrior& prior,
                               const TaskParam& theta) {
  Eigen::VectorXd grad;
  prior.eval(theta, &grad);
  return grad;
}

FitResult fit_prior(const DemoDataset& demos, const TaskSampler& mu0,
                    std::shared_ptr<const QModel> model,
                    const FitOptions& opts) {
  if (opts.lambda_star < 0.0)
    throw std::invalid_argument("lambda_star must be >= 0");
  if (opts.iterations < 0 || opts.step_size <= 0.0)
    throw std::invalid_argument("bad optimizer settings");

  FitResult result;
  GibbsPrior& prior = result.prior;
  prior.lambda_star = opts.lambda_star;
  prior.beta = opts.beta;
  prior.beta_eff = opts.beta_eff;
  prior.env_signature = demos.env_signature;
  prior.demo_hash = hash_bytes(write_demo_text(demos));
  prior.model = std::move(model);

  const int n = demos.size();
  if (n == 0) {
    prior.alpha.resize(0);
    prior.finalize(demos);
    result.report.dual_trace = {0.0};
    return result;
  }

  FeatureMatrix fm =
      build_feature_matrix(demos, mu0, opts.reference_samples, opts.beta,
                           *prior.model, opts.seed);

  // Ascend the dual in xi = ln(alpha): the log barrier keeps the optimum
  // interior, and exponentiating enforces positivity for free.
  const double init_alpha =
      opts.lambda_star > 0.0 ? opts.lambda_star / n : 1e-2;
  Eigen::VectorXd xi =
      Eigen::VectorXd::Constant(n, std::log(init_alpha));
  Eigen::VectorXd alpha = xi.array().exp();

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(n);

  double value = dual_objective(alpha, fm, opts.lambda_star);
  result.report.dual_trace.reserve(static_cast<size_t>(opts.iterations) + 1);
  result.report.dual_trace.push_back(value);

  // Constant step for the first 60% of iterations, then exponential decay
  // down to 1e-4 of the base step; the decay quenches the adaptive-step
  // oscillation near the optimum.
  const int hold = opts.iterations * 6 / 10;
  const double decay =
      opts.iterations > hold
          ? std::pow(1e-4, 1.0 / static_cast<double>(opts.iterations - hold))
          : 1.0;

  double lr = opts.step_size;
  for (int t = 1; t <= opts.iterations; ++t) {
    if (t > hold) lr *= decay;

    Eigen::VectorXd g_alpha = dual_gradient(alpha, fm, opts.lambda_star);
    Eigen::VectorXd g_xi = g_alpha.array() * alpha.array();
    m1 = beta1 * m1 + (1.0 - beta1) * g_xi;
    m2 = beta2 * m2.array() + (1.0 - beta2) * g_xi.array().square();
    double c1 = 1.0 - std::pow(beta1, t);
    double c2 = 1.0 - std::pow(beta2, t);
    Eigen::VectorXd step =
        lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);

    auto clamp_xi = [](Eigen::VectorXd v) {
      return v.cwiseMax(-700.0).cwiseMin(700.0).eval();
    };
    Eigen::VectorXd xi_new = clamp_xi(xi + step);
    Eigen::VectorXd alpha_new = xi_new.array().exp();
    double value_new = dual_objective(alpha_new, fm, opts.lambda_star);

    if (t > 10) {
      // Backtrack so the trace is nondecreasing once warm-up is over.
      int tries = 0;
      while (value_new < value && tries < 30) {
        step *= 0.5;
        xi_new = clamp_xi(xi + step);
        alpha_new = xi_new.array().exp();
        value_new = dual_objective(alpha_new, fm, opts.lambda_star);
        ++tries;
      }
      if (value_new < value) {
        result.report.dual_trace.push_back(value);
        continue;  // no acceptable step this iteration
      }
    }
    if (!std::isfinite(value_new))
      throw std::runtime_error("dual objective became non-finite at iteration " +
                               std::to_string(t));
    xi = std::move(xi_new);
    alpha = std::move(alpha_new);
    value = value_new;
    result.report.dual_trace.push_back(value);
  }

  result.report.final_dual = value;
  result.report.final_grad_norm =
      dual_gradient(alpha, fm, opts.lambda_star).norm();
  prior.alpha = std::move(alpha);
  prior.finalize(demos);
  return result;
}

NormalizationCheck prior_normalization_check(const GibbsPrior& prior,
                                             const TaskSampler& mu0,
                                             int num_samples, uint64_t seed) {
  if (num_samples <= 0)
    throw std::invalid_argument("need at least one reference sample");
  Rng rng = make_rng({seed, 0x6e6f726dULL});
  Eigen::VectorXd log_w(num_samples);
  for (int j = 0; j < num_samples; ++j) {
    TaskParam theta = mu0(rng);
    log_w[j] = prior.eval(theta, nullptr);
  }
  double m = log_w.maxCoeff();
  Eigen::VectorXd w = (log_w.array() - m).exp();
  double total = w.sum();
  double total_sq = w.squaredNorm();

  NormalizationCheck check;
  check.normalized_sum = total / total;  // exactly 1 for any finite total > 0
  check.ess_ratio = (total * total) / (total_sq * num_samples);
  return check;
}

std::string prior_to_json(const GibbsPrior& prior) {
  nlohmann::json j;
  j["alpha"] = std::vector<double>(prior.alpha.data(),
                                   prior.alpha.data() + prior.alpha.size());
  j["lambda_star"] = prior.lambda_star;
  if (std::isinf(prior.beta))
    j["beta"] = "inf";
  else
    j["beta"] = prior.beta;
  j["beta_eff"] = prior.beta_eff;
  j["env"] = prior.env_signature;
  j["demo_hash"] = prior.demo_hash;
  return j.dump(2);
}

GibbsPrior prior_from_json(const std::string& json_text,
                           const DemoDataset& demos,
                           std::shared_ptr<const QModel> model) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  GibbsPrior prior;
  auto alpha = j.at("alpha").get<std::vector<double>>();
  prior.alpha = Eigen::Map<Eigen::VectorXd>(alpha.data(),
                                            static_cast<Eigen::Index>(alpha.size()));
  prior.lambda_star = j.at("lambda_star").get<double>();
  if (j.at("beta").is_string())
    prior.beta = kBetaInf;
  else
    prior.beta = j.at("beta").get<double>();
  prior.beta_eff = j.at("beta_eff").get<double>();
  prior.env_signature = j.at("env").get<std::string>();
  prior.demo_hash = j.at("demo_hash").get<std::string>();
  prior.model = std::move(model);

  if (prior.env_signature != demos.env_signature)
    throw std::runtime_error("prior/demo env signature mismatch");
  if (prior.demo_hash != hash_bytes(write_demo_text(demos)))
    throw std::runtime_error("prior/demo hash mismatch: wrong demo file");
  prior.finalize(demos);
  return prior;
}

}  // namespace experior
