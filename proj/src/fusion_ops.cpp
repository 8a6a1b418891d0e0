#include "asymfusion/fusion_ops.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "asymfusion/ops.hpp"

namespace asymfusion {

int ShuffleConfig::resolve(int channels) const {
    if (channels < 2) {
        throw std::out_of_range("channel shuffle needs at least 2 channels, got " + std::to_string(channels));
    }
    const int t = static_cast<int>(std::lround(split_fraction * channels));
    return std::clamp(t, 1, channels - 1);
}

void ShiftSpec::validate() const {
    std::set<std::pair<int, int>> seen;
    for (int g = 0; g < 4; ++g) {
        if (std::abs(row_offset[g]) + std::abs(col_offset[g]) != 1) {
            throw std::invalid_argument("ShiftSpec: group " + std::to_string(g) + " is not a unit step");
        }
        seen.emplace(row_offset[g], col_offset[g]);
    }
    if (seen.size() != 4) throw std::invalid_argument("ShiftSpec: directions must be distinct");
}

namespace {

void require_pair(const Shape& a, const Shape& b, const char* op) {
    const char* names[] = {"N", "C", "H", "W"};
    const int lhs[] = {a.n, a.c, a.h, a.w};
    const int rhs[] = {b.n, b.c, b.h, b.w};
    for (int i = 0; i < 4; ++i) {
        if (lhs[i] != rhs[i]) {
            throw DimensionError(names[i], std::string(op) + ": operands differ on axis " + names[i] +
                                               " " + a.str() + " vs " + b.str());
        }
    }
}

void require_quarters(int channels) {
    if (channels % 4 != 0) {
        throw DimensionError("C", "pixel_shift: channel count " + std::to_string(channels) +
                                      " is not divisible by 4");
    }
}

void check_split(int split, int channels) {
    if (split < 1 || split >= channels) {
        throw std::out_of_range("channel shuffle: split point " + std::to_string(split) +
                                " outside [1, " + std::to_string(channels - 1) + "]");
    }
}

// out[c,h,w] += x[c, h+dr, w+dc] (forward) or the adjoint when `adjoint`.
void shift_accumulate(const Tensor& src, Tensor& dst, const ShiftSpec& spec, bool adjoint) {
    const Shape s = src.shape();
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const int grp = ShiftSpec::group(c, s.c);
            const int dr = spec.row_offset[grp];
            const int dc = spec.col_offset[grp];
            for (int h = 0; h < s.h; ++h) {
                const int sh = h + dr;
                if (sh < 0 || sh >= s.h) continue;
                for (int w = 0; w < s.w; ++w) {
                    const int sw = w + dc;
                    if (sw < 0 || sw >= s.w) continue;
                    if (adjoint) {
                        dst.at(n, c, sh, sw) += src.at(n, c, h, w);
                    } else {
                        dst.at(n, c, h, w) += src.at(n, c, sh, sw);
                    }
                }
            }
        }
    }
}

}  // namespace

std::pair<Tensor, Tensor> channel_shuffle_at(const Tensor& x1, const Tensor& x2, int split) {
    require_pair(x1.shape(), x2.shape(), "channel_shuffle");
    const int c = x1.shape().c;
    check_split(split, c);
    Tensor f1 = ops::channel_concat(ops::channel_slice(x1, 1, split), ops::channel_slice(x2, split + 1, c));
    Tensor f2 = ops::channel_concat(ops::channel_slice(x2, 1, split), ops::channel_slice(x1, split + 1, c));
    return {std::move(f1), std::move(f2)};
}

std::pair<Tensor, Tensor> channel_shuffle(const Tensor& x1, const Tensor& x2, const ShuffleConfig& cfg) {
    require_pair(x1.shape(), x2.shape(), "channel_shuffle");
    return channel_shuffle_at(x1, x2, cfg.resolve(x1.shape().c));
}

Tensor pixel_shift(const Tensor& x, const ShiftSpec& spec) {
    require_quarters(x.shape().c);
    spec.validate();
    Tensor out(x.shape());
    shift_accumulate(x, out, spec, false);
    return out;
}

std::pair<Tensor, Tensor> shift_fuse(const Tensor& x1, const Tensor& x2, const ShiftSpec& spec) {
    require_pair(x1.shape(), x2.shape(), "shift_fuse");
    return {ops::add(x1, pixel_shift(x2, spec)), ops::add(x2, pixel_shift(x1, spec))};
}

Var shuffle_mix(Graph& g, Var own, Var other, int split) {
    require_pair(g.value(own).shape(), g.value(other).shape(), "channel_shuffle");
    const int c = g.value(own).shape().c;
    check_split(split, c);
    return channel_concat(g, channel_slice(g, own, 1, split), channel_slice(g, other, split + 1, c));
}

std::pair<Var, Var> channel_shuffle(Graph& g, Var x1, Var x2, int split) {
    return {shuffle_mix(g, x1, x2, split), shuffle_mix(g, x2, x1, split)};
}

Var pixel_shift(Graph& g, Var x, const ShiftSpec& spec) {
    Tensor out = pixel_shift(g.value(x), spec);
    return g.record("pixel_shift", std::move(out), {x}, [spec](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        shift_accumulate(a.grad_out, *a.grad_inputs[0], spec, true);
    });
}

std::pair<Var, Var> shift_fuse(Graph& g, Var x1, Var x2, const ShiftSpec& spec) {
    require_pair(g.value(x1).shape(), g.value(x2).shape(), "shift_fuse");
    return {add(g, x1, pixel_shift(g, x2, spec)), add(g, x2, pixel_shift(g, x1, spec))};
}

}  // namespace asymfusion

namespace asymfusion {

Tensor swap_input_halves(const Tensor& weight) {
    const Shape s = weight.shape();
    if (s.c % 2 != 0 || s.h != 1 || s.w != 1) {
        throw DimensionError("Cin", "swap_input_halves: need pointwise weight with even Cin, got " + s.str());
    }
    const int half = s.c / 2;
    Tensor out(s);
    for (int o = 0; o < s.n; ++o)
        for (int i = 0; i < s.c; ++i) out.at(o, i, 0, 0) = weight.at(o, (i + half) % s.c, 0, 0);
    return out;
}

Tensor swap_output_halves(const Tensor& weight) {
    const Shape s = weight.shape();
    // Biases are stored 1 x C x 1 x 1, weights Cout x Cin x 1 x 1.
    const bool is_bias = s.n == 1 && s.h == 1 && s.w == 1;
    const int rows = is_bias ? s.c : s.n;
    if (rows % 2 != 0) throw DimensionError("Cout", "swap_output_halves: odd output count in " + s.str());
    const int half = rows / 2;
    const std::size_t row_size = is_bias ? 1 : static_cast<std::size_t>(s.c) * s.h * s.w;
    Tensor out(s);
    for (int r = 0; r < rows; ++r) {
        const int src = (r + half) % rows;
        std::copy_n(weight.data().data() + src * row_size, row_size, out.data().data() + r * row_size);
    }
    return out;
}

AttentionWeights AttentionWeights::swapped() const {
    return AttentionWeights{swap_input_halves(w1), b1, swap_output_halves(w2), swap_output_halves(b2)};
}

Var attention_fuse(Graph& g, Var x1, Var x2, Var w1, Var b1, Var w2, Var b2) {
    const int c = g.value(x1).shape().c;
    Var joint = channel_concat(g, x1, x2);
    Var hidden = relu(g, conv2d(g, joint, w1, b1, 1, 0));
    Var gate = sigmoid(g, conv2d(g, hidden, w2, b2, 1, 0));
    Var own = mul(g, channel_slice(g, gate, 1, c), x1);
    Var other = mul(g, channel_slice(g, gate, c + 1, 2 * c), x2);
    return add(g, own, other);
}

Tensor attention_fuse(const Tensor& x1, const Tensor& x2, const AttentionWeights& weights) {
    Graph g;
    Var out = attention_fuse(g, g.constant(x1), g.constant(x2), g.constant(weights.w1),
                             g.constant(weights.b1), g.constant(weights.w2), g.constant(weights.b2));
    return g.value(out);
}

}  // namespace asymfusion
