#include "plc/optim.hpp"

#include <cmath>
#include <map>

#include "plc/errors.hpp"

namespace plc {

void AdamConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("adam lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("adam eps must be positive");
}

Adam::Adam(std::vector<NamedParameter> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config), lr_(config.lr) {
  config_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::set_lr(double lr) {
  if (!(lr > 0)) throw ConfigError("adam lr must be positive");
  lr_ = lr;
}

void Adam::step() {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1 - std::pow(b1, double(steps_)), c2 = 1 - std::pow(b2, double(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var p = params_[i].var;
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor& w = p.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1 - b1) * g[j];
      v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
    round_to_float(w);
    round_to_float(m);
    round_to_float(v);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Var v = p.var;
    v.zero_grad();
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(params_[i].name + ".m", m_[i]);
    out.emplace_back(params_[i].name + ".v", v_[i]);
  }
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
  std::map<std::string, const Tensor*> byname;
  for (const auto& [name, t] : state) byname[name] = &t;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (auto [suffix, dst] : {std::pair{".m", &m_[i]}, std::pair{".v", &v_[i]}}) {
      const std::string name = params_[i].name + suffix;
      auto it = byname.find(name);
      if (it == byname.end()) throw CorruptionError(name, "optimizer moment missing");
      if (it->second->shape() != dst->shape()) throw CorruptionError(name, "optimizer moment has the wrong shape");
      *dst = *it->second;
    }
  }
}

}  // namespace plc
