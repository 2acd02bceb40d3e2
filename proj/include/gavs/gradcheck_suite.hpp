#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gavs/config.hpp"
#include "gavs/gradcheck.hpp"

namespace gavs {

struct GradcheckCaseResult {
    std::string name;
    GradcheckReport report;
    double seconds = 0;
    bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

// Every differentiable op on random inputs in [-1, 1].
std::vector<GradcheckCaseResult> gradcheck_ops(std::uint64_t seed);

// Small model with an 8x8 feature grid and every optional path switched on
// (visual adapters, SAP, all decoder adapters, feedback, semantic loss).
RunConfig gradcheck_model_config(std::uint64_t seed);

// Full training loss of that model over every parameter.
GradcheckCaseResult gradcheck_full_loss(std::uint64_t seed);

std::vector<GradcheckCaseResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace gavs
