#include "gavs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "gavs/ops.hpp"

namespace gavs {

double gradcheck_relative_error(double autodiff, double finite_diff) {
    return std::abs(autodiff - finite_diff) /
           std::max(1e-8, std::abs(autodiff) + std::abs(finite_diff));
}

namespace {

// sum(plus - minus), differencing each summand first and accumulating with
// Neumaier compensation.
double summed_difference(std::span<const double> plus, std::span<const double> minus) {
    double total = 0.0;
    double carry = 0.0;
    for (std::size_t i = 0; i < plus.size(); ++i) {
        const double d = plus[i] - minus[i];
        const double t = total + d;
        carry += std::abs(total) >= std::abs(d) ? (total - t) + d : (d - t) + total;
        total = t;
    }
    return total + carry;
}

}  // namespace

GradcheckReport finite_diff_gradcheck(const std::function<Tensor()>& loss,
                                      std::vector<Parameter> params, double step) {
    std::vector<bool> saved_flags;
    for (Parameter& p : params) {
        saved_flags.push_back(p.tensor.requires_grad());
        p.tensor.set_requires_grad(true);
        p.tensor.zero_grad();
    }

    Tensor value = loss();
    (value.numel() == 1 ? value : sum(value)).backward();
    std::vector<std::vector<double>> autodiff;
    for (Parameter& p : params) {
        if (p.tensor.has_grad()) {
            autodiff.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
        } else {
            autodiff.emplace_back(p.tensor.numel(), 0.0);
        }
    }

    GradcheckReport report;
    {
        NoGradGuard no_grad;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto data = params[pi].tensor.mutable_data();
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double original = data[i];
                data[i] = original + step;
                const Tensor plus = loss();
                data[i] = original - step;
                const Tensor minus = loss();
                data[i] = original;
                const double fd = summed_difference(plus.data(), minus.data()) / (2.0 * step);
                const double err = gradcheck_relative_error(autodiff[pi][i], fd);
                ++report.coordinates;
                if (err > report.max_rel_error || report.worst_param.empty()) {
                    report.max_rel_error = std::max(err, report.max_rel_error);
                    if (err >= report.max_rel_error) {
                        report.worst_param = params[pi].name;
                        report.worst_index = i;
                        report.worst_autodiff = autodiff[pi][i];
                        report.worst_finite_diff = fd;
                    }
                }
            }
        }
    }

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        params[pi].tensor.zero_grad();
        params[pi].tensor.set_requires_grad(saved_flags[pi]);
    }
    return report;
}

}  // namespace gavs
