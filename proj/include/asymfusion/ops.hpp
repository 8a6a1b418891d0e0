#pragma once

#include <optional>

#include "asymfusion/tensor.hpp"

// Forward kernels on plain tensors. Every function is pure; the autodiff
// layer in graph.hpp wraps these with recorded backward rules.
namespace asymfusion::ops {

/// Cross-correlation (no kernel flip) with zero padding.
/// `weight` is Cout x Cin x k x k, `bias` is 1 x Cout x 1 x 1 when present.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad);

/// Output extent of conv2d along one spatial axis.
inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sigmoid(const Tensor& x);
Tensor mul(const Tensor& a, const Tensor& b);

/// Channel-wise concatenation, `a`'s channels first.
Tensor channel_concat(const Tensor& a, const Tensor& b);

/// Channels lo..hi, 1-based and inclusive.
Tensor channel_slice(const Tensor& x, int lo, int hi);

/// Nearest-neighbour 2x upsampling: out[h][w] = in[h/2][w/2].
Tensor upsample_nearest2x(const Tensor& x);

/// Softmax over the channel axis at each pixel.
Tensor softmax_channels(const Tensor& logits);

struct SoftmaxCe {
    Tensor probs;
    double loss = 0.0;      // mean NLL over non-ignored pixels
    std::size_t counted = 0;
};

/// Softmax cross-entropy. Labels equal to `ignore_index` are skipped; any
/// other label outside [0, C) throws std::out_of_range.
SoftmaxCe softmax_ce(const Tensor& logits, const LabelMap& labels, int ignore_index = -1);

/// Per-pixel argmax over channels.
LabelMap argmax_channels(const Tensor& scores);

/// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
/// op(A) is M x K, op(B) is K x N.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          const double* b, double beta, double* c);

/// Unfolds one image (C x H x W) into (C*k*k) x (Ho*Wo) patch columns.
void im2col(const double* image, int channels, int height, int width, int k, int stride, int pad,
            double* columns);

/// Adjoint of im2col: scatters-adds columns back onto a C x H x W image.
void col2im(const double* columns, int channels, int height, int width, int k, int stride,
            int pad, double* image);

}  // namespace asymfusion::ops
