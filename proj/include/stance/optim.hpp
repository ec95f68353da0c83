#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stance/tensor.hpp"

namespace stance {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for one parameter list. The list passed to step() must be
// the same (same order, same shapes) on every call.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::size_t steps() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  // Applies one bias-corrected update and zeroes every gradient. Throws
  // before touching any parameter if a gradient is non-finite.
  void step(std::span<Parameter* const> params) {
    if (m_.empty()) {
      for (const Parameter* p : params) {
        m_.emplace_back(p->value.shape);
        v_.emplace_back(p->value.shape);
      }
    }
    if (m_.size() != params.size()) {
      throw std::invalid_argument("adam: parameter list changed size");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->value.shape != m_[i].shape) {
        throw std::invalid_argument("adam: shape changed for " +
                                    params[i]->name);
      }
      for (double g : params[i]->grad.data) {
        if (!std::isfinite(g)) {
          throw std::runtime_error("adam: non-finite gradient in parameter " +
                                   params[i]->name);
        }
      }
    }
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      auto& m = m_[i].data;
      auto& v = v_[i].data;
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad.data[k];
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p.value.data[k] -=
            config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
      }
      p.zero_grad();
    }
  }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

// Rescales all gradients so their joint L2 norm is at most max_norm.
inline void clip_grad_norm(std::span<Parameter* const> params,
                           double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || !std::isfinite(norm)) return;
  const double scale = max_norm / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.data) g *= scale;
  }
}

}  // namespace stance
