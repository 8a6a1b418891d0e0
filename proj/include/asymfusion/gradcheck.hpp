#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "asymfusion/graph.hpp"

namespace asymfusion {

struct InputGradError {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Outcome of a central-difference gradient check. Relative error per
/// element is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
struct GradReport {
    std::string op;
    double max_rel_error = 0.0;
    std::vector<InputGradError> inputs;
    /// Smallest |relu input| seen while building the graph.
    double min_relu_margin = 1e300;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

double relative_error(double analytic, double numeric);

/// Builds a scalar loss from the graph; parameters must enter via Graph::param.
using LossBuilder = std::function<Var(Graph&)>;

/// Checks d(loss)/d(params) against central differences with step `eps`.
GradReport grad_check_params(const std::string& op, std::span<Parameter* const> params,
                             const LossBuilder& loss, double eps = 1e-5);

/// Builds an op output from graph inputs (one Var per tensor in `inputs`).
using OpBuilder = std::function<Var(Graph&, std::span<const Var>)>;

/// Checks an op by contracting its output with a fixed seeded weight tensor
/// (uniform in [0.5, 1.5]) so that every output element contributes.
GradReport grad_check(const std::string& op, const OpBuilder& build, std::vector<Tensor> inputs,
                      std::vector<std::string> names, double eps = 1e-5,
                      std::uint64_t projection_seed = 0x5eed);

}  // namespace asymfusion
