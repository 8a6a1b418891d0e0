#pragma once

#include <array>
#include <utility>

#include "asymfusion/graph.hpp"

namespace asymfusion {

/// Channel split for the shuffle exchange. The resolved split point T is
/// 1-based: channels 1..T stay with their own branch, T+1..C are swapped.
struct ShuffleConfig {
    double split_fraction = 0.7;

    /// T = round(split_fraction * C), clamped to [1, C-1].
    int resolve(int channels) const;
};

/// One-pixel shift per contiguous channel quarter. Group g = floor(4c/C)
/// reads its source at (h + row_offset[g], w + col_offset[g]); reads that
/// fall outside the map yield zero.
struct ShiftSpec {
    std::array<int, 4> row_offset{0, -1, 0, 1};
    std::array<int, 4> col_offset{-1, 0, 1, 0};

    static int group(int channel, int channels) { return 4 * channel / channels; }
    /// Throws std::invalid_argument unless the four offsets are distinct unit steps.
    void validate() const;
};

/// f1 = x1[1..T] || x2[T+1..C],  f2 = x2[1..T] || x1[T+1..C].
std::pair<Tensor, Tensor> channel_shuffle(const Tensor& x1, const Tensor& x2, const ShuffleConfig& cfg);
std::pair<Tensor, Tensor> channel_shuffle_at(const Tensor& x1, const Tensor& x2, int split);

/// Zero-filled one-pixel shift of each channel quarter. C must be divisible by 4.
Tensor pixel_shift(const Tensor& x, const ShiftSpec& spec = {});

/// f1 = x1 + pixel_shift(x2),  f2 = x2 + pixel_shift(x1).
std::pair<Tensor, Tensor> shift_fuse(const Tensor& x1, const Tensor& x2, const ShiftSpec& spec = {});

/// Graph form of one shuffle output: own[1..T] || other[T+1..C].
Var shuffle_mix(Graph& g, Var own, Var other, int split);
/// Both shuffle outputs.
std::pair<Var, Var> channel_shuffle(Graph& g, Var x1, Var x2, int split);
/// Graph form of pixel_shift; gradients route back by the opposite offset.
Var pixel_shift(Graph& g, Var x, const ShiftSpec& spec = {});
std::pair<Var, Var> shift_fuse(Graph& g, Var x1, Var x2, const ShiftSpec& spec = {});

}  // namespace asymfusion

namespace asymfusion {

/// Minimal attention-gated fusion used as the parameterized symmetric
/// baseline:
///
///   r    = relu(W1 * (x1 || x2) + b1)        W1: B x 2C, pointwise
///   gate = sigmoid(W2 * r + b2)              W2: 2C x B, pointwise
///   F    = gate[1..C] * x1 + gate[C+1..2C] * x2
struct AttentionWeights {
    Tensor w1;  // B x 2C x 1 x 1
    Tensor b1;  // 1 x B x 1 x 1
    Tensor w2;  // 2C x B x 1 x 1
    Tensor b2;  // 1 x 2C x 1 x 1

    /// The same block with its two modality-specific parameter groups exchanged.
    AttentionWeights swapped() const;
};

Var attention_fuse(Graph& g, Var x1, Var x2, Var w1, Var b1, Var w2, Var b2);
Tensor attention_fuse(const Tensor& x1, const Tensor& x2, const AttentionWeights& weights);

/// Exchanges the two input-channel halves of a pointwise weight (Cout x 2C x 1 x 1).
Tensor swap_input_halves(const Tensor& weight);
/// Exchanges the two output-channel halves of a pointwise weight or bias.
Tensor swap_output_halves(const Tensor& weight);

}  // namespace asymfusion
