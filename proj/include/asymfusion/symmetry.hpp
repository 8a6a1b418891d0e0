#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asymfusion/tensor.hpp"

namespace asymfusion {

enum class SymmetryKind { kSymmetricConstructive, kAsymmetricWitness, kInconclusive };

std::string to_string(SymmetryKind kind);

/// Result of a symmetry probe on a fusion block F(x1, x2; theta) followed by
/// a pointwise convolution C.
struct SymmetryVerdict {
    std::string block;
    SymmetryKind verdict = SymmetryKind::kInconclusive;
    /// Construction probes: max |C1(F(x1,x2;th1)) - C2(F(x2,x1;th2))|.
    /// Search probes: pooled relative L2 residual of the best linear C2 on held-out pairs.
    double residual = 0.0;
    double tolerance = 0.0;
    std::string method;
    int trials = 0;
    bool ridge_applied = false;
    std::string note;
    /// Largest single-pair residual (search probes only).
    double worst_pair_residual = 0.0;
    /// Held-out pair achieving worst_pair_residual when the verdict is a witness.
    std::optional<std::pair<Tensor, Tensor>> witness;
    std::uint64_t witness_seed = 0;
};

struct ProbeOptions {
    int channels = 8;
    int height = 6;
    int width = 6;
    int split = 0;  // channel shuffle split point; 0 -> ShuffleConfig default
    std::uint64_t seed = 1;
    /// shift_fuse search only: force x1 = 0 so F(x1,x2) reduces to a pure shift.
    bool zero_first = true;
};

/// Blocks accepted by the construction probe.
const std::vector<std::string>& constructive_blocks();
/// Blocks accepted by the search probe.
const std::vector<std::string>& searchable_blocks();

/// Builds C2 (and theta2) from C1 (and theta1) by the block's swap rule and
/// measures the worst mismatch over `trials` random input pairs. The verdict
/// is symmetric-constructive when that mismatch is below 1e-9.
/// Throws std::invalid_argument for an unknown block.
SymmetryVerdict verify_symmetric_by_construction(const std::string& block, int trials,
                                                 const ProbeOptions& options = {});

/// Fits the best pointwise affine C2 mapping F(x2,x1) onto C1(F(x1,x2)) by
/// least squares over `sample_count` random pairs, then scores it on held-out
/// pairs. Residual above `tolerance` yields an asymmetric witness.
SymmetryVerdict refute_symmetry_by_search(const std::string& block, int sample_count,
                                          double tolerance, const ProbeOptions& options = {});

}  // namespace asymfusion
