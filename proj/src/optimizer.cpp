#include "gavs/optimizer.hpp"

#include <cmath>

namespace gavs {

void Adam::step(ParameterStore& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter& p : store.all()) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        auto g = p.tensor.grad();
        Moments& mo = state_[p.name];
        if (mo.m.empty()) {
            mo.m.assign(g.size(), 0.0);
            mo.v.assign(g.size(), 0.0);
        }
        auto w = p.tensor.mutable_data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
            mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = mo.m[i] / c1;
            const double vhat = mo.v[i] / c2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace gavs
