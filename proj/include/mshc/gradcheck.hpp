#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mshc/tensor.hpp"

namespace mshc::gradcheck {

// Max relative error between the tape gradient of fn() and central finite
// differences over every element of every input. fn must rebuild its scalar
// output from the current input values on each call. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1).
double max_rel_err(const std::function<Tensor()>& fn,
                   std::vector<Tensor>& inputs, real step = real(1e-4));

struct OpReport {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

// Finite-difference checks for every differentiable operation, num_seeds
// random instances each.
std::vector<OpReport> run_suite(int num_seeds, double tolerance);

}  // namespace mshc::gradcheck
