#pragma once

// Adam with bias correction. Moments are keyed by parameter name and live
// outside the graph.

#include <cmath>
#include <cstdint>
#include <map>

#include "ctxmatch/autodiff.hpp"

namespace ctxmatch {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // One update over every parameter in the store. Gradients are left
  // untouched; callers zero them before the next forward pass.
  void step(ParamStore& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params.entries()) {
      if (p->grad.size() != p->value.size())
        fail("adam: missing gradient for param '", name, "'");
      Tensor& m = moment(m_, name, p->value);
      Tensor& v = moment(v_, name, p->value);
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p->value[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }

 private:
  static Tensor& moment(std::map<std::string, Tensor>& table, const std::string& name,
                        const Tensor& like) {
    auto it = table.find(name);
    if (it == table.end()) it = table.emplace(name, Tensor::zeros(like.shape())).first;
    return it->second;
  }

  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace ctxmatch
