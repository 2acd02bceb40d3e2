#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gavs/parameter.hpp"

namespace gavs {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Only parameters flagged trainable that hold a
// gradient are touched; everything else keeps its exact bits.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParameterStore& store);
    std::size_t steps_taken() const { return t_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::unordered_map<std::string, Moments> state_;
};

}  // namespace gavs
