#pragma once

// Named parameter collection with freeze semantics, plus the first-order
// optimizers (Adam by default, plain SGD for reference runs). Frozen
// parameters are excluded from updates and from gradient computation; their
// bytes never change across steps.

#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "asfm/autodiff.hpp"
#include "asfm/tensor.hpp"

namespace asfm::ad {

class ModelParams {
 public:
  VarPtr add(const std::string& name, Tensor value) {
    if (t_.count(name)) throw std::invalid_argument("ModelParams: duplicate parameter " + name);
    VarPtr p = parameter(std::move(value));
    t_[name] = p;
    return p;
  }

  const VarPtr& get(const std::string& name) const {
    auto it = t_.find(name);
    if (it == t_.end()) throw std::invalid_argument("ModelParams: unknown parameter " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return t_.count(name) != 0; }

  // Ordered by name, so iteration, checkpoints and optimizer sweeps are
  // deterministic.
  const std::map<std::string, VarPtr>& all() const { return t_; }

  void freeze(const std::string& name) {
    get(name)->requires_grad = false;
    frozen_.insert(name);
  }

  void freeze_prefix(const std::string& prefix) {
    for (auto& [name, var] : t_)
      if (name.rfind(prefix, 0) == 0) {
        var->requires_grad = false;
        frozen_.insert(name);
      }
  }

  void unfreeze_prefix(const std::string& prefix) {
    for (auto it = frozen_.begin(); it != frozen_.end();) {
      if (it->rfind(prefix, 0) == 0) {
        t_.at(*it)->requires_grad = true;
        it = frozen_.erase(it);
      } else {
        ++it;
      }
    }
  }

  bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }

  bool all_frozen(const std::string& prefix) const {
    for (const auto& [name, var] : t_)
      if (name.rfind(prefix, 0) == 0 && !frozen_.count(name)) return false;
    return true;
  }

  const std::set<std::string>& frozen() const { return frozen_; }

  void set_frozen(const std::set<std::string>& frozen) {
    for (auto& [name, var] : t_) var->requires_grad = true;
    frozen_.clear();
    for (const std::string& name : frozen) freeze(name);
  }

  void zero_grads() {
    for (auto& [name, var] : t_) var->grad = Tensor();
  }

  // Raw value bytes of every parameter under prefix, in name order. Used for
  // freeze-contract verification.
  std::vector<unsigned char> snapshot_bytes(const std::string& prefix = "") const {
    std::vector<unsigned char> out;
    for (const auto& [name, var] : t_) {
      if (name.rfind(prefix, 0) != 0) continue;
      const auto* p = reinterpret_cast<const unsigned char*>(var->val.v.data());
      out.insert(out.end(), p, p + var->val.v.size() * sizeof(double));
    }
    return out;
  }

 private:
  std::map<std::string, VarPtr> t_;
  std::set<std::string> frozen_;
};

struct OptimizerConfig {
  enum class Method { Adam, Sgd };
  Method method = Method::Adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  // Updates every non-frozen parameter from its populated gradient, then
  // clears gradients. Throws state_error if a trainable gradient is missing.
  void step(ModelParams& params) {
    for (const auto& [name, var] : params.all()) {
      if (params.is_frozen(name)) continue;
      if (!var->has_grad())
        throw state_error("Optimizer::step: missing gradient for parameter " + name);
    }
    ++step_count_;
    for (const auto& [name, var] : params.all()) {
      if (params.is_frozen(name)) continue;
      Tensor& g = var->grad;
      Tensor& x = var->val;
      if (cfg_.method == OptimizerConfig::Method::Sgd) {
        for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] -= cfg_.lr * g.v[i];
      } else {
        Tensor& m = moment(m_, name, x);
        Tensor& v = moment(v_, name, x);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < x.v.size(); ++i) {
          m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g.v[i];
          v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
          const double mhat = m.v[i] / bc1;
          const double vhat = v.v[i] / bc2;
          x.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
      }
      var->grad = Tensor();
    }
  }

  std::int64_t step_count() const { return step_count_; }
  const OptimizerConfig& config() const { return cfg_; }

  // Checkpoint access: first/second moments plus the step counter.
  const std::map<std::string, Tensor>& moments_m() const { return m_; }
  const std::map<std::string, Tensor>& moments_v() const { return v_; }
  void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
               std::int64_t step_count) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_count_ = step_count;
  }

 private:
  static Tensor& moment(std::map<std::string, Tensor>& store, const std::string& name,
                        const Tensor& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor::zeros(like.shape)).first;
    return it->second;
  }

  OptimizerConfig cfg_;
  std::int64_t step_count_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace asfm::ad
