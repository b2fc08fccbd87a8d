#include "experior/sampling.hpp"

#include <cmath>
#include <stdexcept>

namespace experior {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Log density (and gradient) in xi space, including the transform Jacobian.
// Gradient buffers are pre-sized and zeroed before eval so targets may
// either assign or accumulate.
double eval_in_xi(const LogDensity& target, const Eigen::VectorXd& xi,
                  Eigen::VectorXd* grad_xi) {
  if (grad_xi != nullptr) {
    grad_xi->resize(xi.size());
    grad_xi->setZero();
  }
  if (target.parameterization == Parameterization::Unconstrained)
    return target.eval(xi, grad_xi);

  Eigen::VectorXd theta(xi.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) theta[i] = sigmoid(xi[i]);
  Eigen::VectorXd grad_theta = Eigen::VectorXd::Zero(xi.size());
  double value = target.eval(theta, grad_xi != nullptr ? &grad_theta : nullptr);
  // Jacobian: ln sigma'(xi) = ln(theta (1-theta)) summed over coordinates.
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    double s = theta[i];
    value += std::log(s) + std::log1p(-s);
  }
  if (grad_xi != nullptr) {
    grad_xi->resize(xi.size());
    for (Eigen::Index i = 0; i < xi.size(); ++i) {
      double s = theta[i];
      (*grad_xi)[i] = grad_theta[i] * s * (1.0 - s) + (1.0 - 2.0 * s);
    }
  }
  return value;
}

}  // namespace

Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta,
                                 Parameterization param) {
  if (param == Parameterization::Unconstrained) return theta;
  Eigen::VectorXd xi(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    double t = theta[i];
    if (t <= 0.0 || t >= 1.0)
      throw std::invalid_argument("logit-box values must lie inside (0,1)");
    xi[i] = std::log(t) - std::log1p(-t);
  }
  return xi;
}

Eigen::VectorXd to_task_space(const Eigen::VectorXd& xi,
                              Parameterization param) {
  if (param == Parameterization::Unconstrained) return xi;
  Eigen::VectorXd theta(xi.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) theta[i] = sigmoid(xi[i]);
  return theta;
}

std::vector<Eigen::VectorXd> sgld_sample(const LogDensity& target,
                                         const SgldConfig& cfg,
                                         Eigen::VectorXd& xi, Rng& rng) {
  if (cfg.step_size <= 0.0) throw std::invalid_argument("step size must be > 0");
  if (cfg.steps < 0 || cfg.thinning < 1)
    throw std::invalid_argument("bad SGLD settings");
  if (xi.size() != target.dim)
    throw std::invalid_argument("chain state does not match target dim");

  std::vector<Eigen::VectorXd> samples;
  if (cfg.steps == 0) {
    samples.push_back(to_task_space(xi, target.parameterization));
    return samples;
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_scale = std::sqrt(cfg.step_size * cfg.temperature);
  Eigen::VectorXd grad(target.dim);
  for (int t = 1; t <= cfg.steps; ++t) {
    eval_in_xi(target, xi, &grad);
    for (Eigen::Index i = 0; i < xi.size(); ++i)
      xi[i] += 0.5 * cfg.step_size * grad[i] + noise_scale * normal(rng);
    if (!xi.allFinite())
      throw std::runtime_error("SGLD chain diverged at step " +
                               std::to_string(t));
    if (t % cfg.thinning == 0)
      samples.push_back(to_task_space(xi, target.parameterization));
  }
  return samples;
}

BanditStats BanditStats::from_history(const OnlineHistory& history,
                                      int num_arms) {
  BanditStats stats(num_arms);
  for (const auto& episode : history.episodes)
    for (const Transition& tr : episode) stats.observe(tr.action, tr.reward);
  return stats;
}

double bandit_log_posterior(const Eigen::VectorXd& theta,
                            const BanditStats& stats, const GibbsPrior& prior,
                            Eigen::VectorXd* grad) {
  const int k = static_cast<int>(theta.size());
  TaskParam theta_param(std::vector<double>(theta.data(), theta.data() + k));

  Eigen::VectorXd prior_grad;
  double value =
      prior.eval(theta_param, grad != nullptr ? &prior_grad : nullptr);
  if (grad != nullptr) *grad = prior_grad;

  for (int a = 0; a < k; ++a) {
    double s = stats.successes[static_cast<size_t>(a)];
    double n = static_cast<double>(stats.counts[static_cast<size_t>(a)]);
    if (n == 0.0) continue;
    double t = theta[a];
    if (t <= 0.0 || t >= 1.0)
      return -std::numeric_limits<double>::infinity();
    value += s * std::log(t) + (n - s) * std::log1p(-t);
    if (grad != nullptr) (*grad)[a] += s / t - (n - s) / (1.0 - t);
  }
  return value;
}

double bandit_log_posterior(const TaskParam& theta,
                            const OnlineHistory& history,
                            const GibbsPrior& prior) {
  Eigen::Map<const Eigen::VectorXd> th(theta.values.data(),
                                       static_cast<Eigen::Index>(theta.values.size()));
  BanditStats stats = BanditStats::from_history(history, theta.size());
  return bandit_log_posterior(th, stats, prior, nullptr);
}

double mdp_log_posterior(const Eigen::VectorXd& theta,
                         const OnlineHistory& history, const GibbsPrior& prior,
                         Eigen::VectorXd* grad) {
  TaskParam theta_param(
      std::vector<double>(theta.data(), theta.data() + theta.size()));

  Eigen::VectorXd prior_grad;
  double value =
      prior.eval(theta_param, grad != nullptr ? &prior_grad : nullptr);
  if (grad != nullptr) *grad = prior_grad;

  const QModel& model = *prior.model;
  const int num_actions = model.num_actions();
  std::vector<double> q(static_cast<size_t>(num_actions));
  for (const auto& episode : history.episodes) {
    for (const Transition& tr : episode) {
      model.q_values(theta_param, tr.state, q.data());
      double q_sa = q[static_cast<size_t>(tr.action)];
      double target = tr.reward;
      int best_next = -1;
      if (!tr.terminal) {
        model.q_values(theta_param, tr.next_state, q.data());
        best_next = 0;
        for (int a = 1; a < num_actions; ++a)
          if (q[static_cast<size_t>(a)] > q[static_cast<size_t>(best_next)])
            best_next = a;
        target += q[static_cast<size_t>(best_next)];
      }
      double residual = target - q_sa;
      value -= 0.5 * residual * residual;
      if (grad != nullptr) {
        // d/dQ(s,a) of -res^2/2 is +res; the max term contributes -res.
        model.accumulate_q_grad(theta_param, tr.state, tr.action, residual,
                                grad->data());
        if (!tr.terminal)
          model.accumulate_q_grad(theta_param, tr.next_state, best_next,
                                  -residual, grad->data());
      }
    }
  }
  return value;
}

double mdp_log_posterior(const TaskParam& theta, const OnlineHistory& history,
                         const GibbsPrior& prior) {
  Eigen::Map<const Eigen::VectorXd> th(theta.values.data(),
                                       static_cast<Eigen::Index>(theta.values.size()));
  return mdp_log_posterior(th, history, prior, nullptr);
}

LogDensity make_bandit_posterior_target(const GibbsPrior& prior,
                                        const BanditStats& stats) {
  LogDensity target;
  target.dim = prior.model->param_dim();
  target.parameterization = Parameterization::LogitBox;
  target.eval = [&prior, &stats](const Eigen::VectorXd& theta,
                                 Eigen::VectorXd* grad) {
    return bandit_log_posterior(theta, stats, prior, grad);
  };
  return target;
}

LogDensity make_mdp_posterior_target(const GibbsPrior& prior,
                                     const OnlineHistory& history,
                                     double base_sigma) {
  LogDensity target;
  target.dim = prior.model->param_dim();
  target.parameterization = Parameterization::Unconstrained;
  const double inv_var = 1.0 / (base_sigma * base_sigma);
  target.eval = [&prior, &history, inv_var](const Eigen::VectorXd& theta,
                                            Eigen::VectorXd* grad) {
    double value = mdp_log_posterior(theta, history, prior, grad);
    value -= 0.5 * inv_var * theta.squaredNorm();
    if (grad != nullptr) *grad -= inv_var * theta;
    return value;
  };
  return target;
}

TaskParam posterior_sample(const LogDensity& target, const SgldConfig& cfg,
                           SgldChain& chain, Rng& rng, double base_sigma) {
  if (!chain.initialized) {
    chain.xi.resize(target.dim);
    if (target.parameterization == Parameterization::LogitBox) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Eigen::VectorXd theta(target.dim);
      for (int i = 0; i < target.dim; ++i) theta[i] = unif(rng);
      chain.xi = to_unconstrained(theta, Parameterization::LogitBox);
    } else {
      std::normal_distribution<double> normal(0.0, base_sigma);
      for (int i = 0; i < target.dim; ++i) chain.xi[i] = normal(rng);
    }
    chain.initialized = true;
  }

  SgldConfig one_draw = cfg;
  one_draw.thinning = std::max(1, cfg.steps);  // only the last iterate matters
  auto samples = sgld_sample(target, one_draw, chain.xi, rng);
  Eigen::VectorXd theta = samples.empty()
                              ? to_task_space(chain.xi, target.parameterization)
                              : samples.back();
  return TaskParam(
      std::vector<double>(theta.data(), theta.data() + theta.size()));
}

}  // namespace experior
