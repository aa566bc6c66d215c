#pragma once

#include "fss/nn/graph.hpp"

#include <functional>
#include <string>
#include <vector>

namespace fss::nn {

/// Max mixed relative error between backward() gradients and central finite
/// differences over every coordinate of `inputs`.  `loss_fn` must rebuild
/// the scalar loss from the inputs' current values on a fresh graph.
double max_grad_error(std::vector<Parameter*> inputs,
                      const std::function<Var(Graph&)>& loss_fn, double step = 1e-4);

struct GradCheckCase {
  std::string op;
  double max_err = 0.0;
  bool pass = false;
};

/// Randomized finite-difference checks for every differentiable op,
/// `instances` instances each.  Inputs are kept away from the kinks of
/// relu/huber/max so the numeric derivative is valid.
std::vector<GradCheckCase> gradcheck_suite(uint64_t seed, int instances, double tolerance = 1e-4);

}  // namespace fss::nn
