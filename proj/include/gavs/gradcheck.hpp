#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gavs/parameter.hpp"

namespace gavs {

struct GradcheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_autodiff = 0.0;
    double worst_finite_diff = 0.0;
    std::size_t coordinates = 0;
};

// |a - b| / max(1e-8, |a| + |b|)
double gradcheck_relative_error(double autodiff, double finite_diff);

// Compares reverse-mode gradients of the scalar `loss` against central
// differences with step `step`, one coordinate at a time, over every tensor in
// `params` (all of them are made to require grad for the duration).
//
// `loss` may also return a vector of summands whose sum is the loss. The
// central difference is then taken per summand before summing, which keeps
// cancellation error well below one ulp of the total.
GradcheckReport finite_diff_gradcheck(const std::function<Tensor()>& loss,
                                      std::vector<Parameter> params, double step = 1e-5);

}  // namespace gavs
