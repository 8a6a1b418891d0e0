#pragma once

#include <vector>

#include "asymfusion/gradcheck.hpp"

namespace asymfusion {

struct SuiteResult {
    GradReport report;
    double tolerance = 0.0;
    bool passed() const { return report.passed(tolerance); }
};

/// Central-difference checks for every differentiable op the network uses,
/// at 1e-6, plus a tiny two-stage network end to end at 1e-5. Fixed seeds,
/// so the output is reproducible.
std::vector<SuiteResult> run_gradient_suite();

}  // namespace asymfusion
