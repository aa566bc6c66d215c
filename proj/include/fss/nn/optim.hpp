#pragma once

#include "fss/nn/graph.hpp"

#include <string>
#include <vector>

namespace fss::nn {

/// SGD or Adam over a fixed parameter set, with a halve-on-plateau learning
/// rate schedule driven by a dev-set metric.
class Optimizer {
 public:
  enum class Kind { Sgd, Adam };

  Optimizer(Kind kind, std::vector<Parameter*> params, double learning_rate);
  static Kind kind_from_string(const std::string& s);

  void step();
  void zero_grad();

  double learning_rate() const { return lr_; }
  void halve_learning_rate() { lr_ *= 0.5; }

 private:
  Kind kind_;
  std::vector<Parameter*> params_;
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long step_count_ = 0;
  std::vector<MatX> m_, v_;
};

/// Halves the learning rate when the (maximized) metric has not improved
/// for `patience` consecutive observations.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(int patience) : patience_(patience) {}

  /// Returns true when this observation triggered a halving.
  bool observe(double metric, Optimizer& opt);

 private:
  int patience_;
  int stale_ = 0;
  bool has_best_ = false;
  double best_ = 0.0;
};

}  // namespace fss::nn
