#include "affectrl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace affectrl {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) continue;  // never touched this round: grad is zero
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    double* pd = p.data();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      pd[i] -= config_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
    }
    p.zero_grad();
  }
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads shape mismatch");
  if (state.step == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state shape mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + eps);
  }
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  for (const Tensor& p : params) p.node()->grad.clear();

  std::vector<std::vector<double>> analytic;
  {
    GradTape tape;
    Tensor loss = f();
    if (loss.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    tape.backward(loss);
    for (const Tensor& p : params) {
      if (p.has_grad())
        analytic.push_back(p.grad());
      else
        analytic.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
  }

  double max_err = 0.0;
  NoGradGuard no_grad;
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    for (int i = 0; i < p.numel(); ++i) {
      const double saved = p.at(i);
      p.at(i) = saved + step;
      const double hi = f().item();
      p.at(i) = saved - step;
      const double lo = f().item();
      p.at(i) = saved;
      if (!std::isfinite(hi) || !std::isfinite(lo))
        throw std::runtime_error("grad_check: non-finite loss at perturbed point");
      const double numeric = (hi - lo) / (2.0 * step);
      const double a = analytic[k][static_cast<size_t>(i)];
      const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
      max_err = std::max(max_err, err);
    }
  }
  for (const Tensor& p : params) p.node()->grad.clear();
  return max_err;
}

}  // namespace affectrl
