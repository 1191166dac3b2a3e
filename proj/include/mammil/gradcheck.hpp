#pragma once

#include <functional>
#include <vector>

#include "mammil/tensor.hpp"

namespace mammil {

// Central-difference verification of the recorded gradients, all in double
// precision. Returns max over entries of
//   |analytic - fd| / max(|analytic|, |fd|, 1e-8)
// and throws VerificationError when a non-finite value shows up, naming the
// offending entry.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

// Same check against a set of live parameters: f() must rebuild the scalar
// loss from the parameters' current values on every call. Used for the
// end-to-end model paths where the inputs are the trainable weights.
double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double eps);

}  // namespace mammil
