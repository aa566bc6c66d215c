#include "fss/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fss::nn {

Optimizer::Optimizer(Kind kind, std::vector<Parameter*> params, double learning_rate)
    : kind_(kind), params_(std::move(params)), lr_(learning_rate) {
  if (kind_ == Kind::Adam) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
      m_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
    }
  }
}

Optimizer::Kind Optimizer::kind_from_string(const std::string& s) {
  if (s == "sgd") return Kind::Sgd;
  if (s == "adam") return Kind::Adam;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void Optimizer::step() {
  ++step_count_;
  if (kind_ == Kind::Sgd) {
    for (Parameter* p : params_) p->value -= lr_ * p->grad;
    return;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    const auto m_hat = m_[i].array() / bc1;
    const auto v_hat = v_[i].array() / bc2;
    p->value.array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

bool PlateauSchedule::observe(double metric, Optimizer& opt) {
  if (!has_best_ || metric > best_) {
    best_ = metric;
    has_best_ = true;
    stale_ = 0;
    return false;
  }
  if (++stale_ >= patience_) {
    opt.halve_learning_rate();
    stale_ = 0;
    return true;
  }
  return false;
}

}  // namespace fss::nn
