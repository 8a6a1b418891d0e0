#include "asymfusion/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace asymfusion::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& s = a.shape();
    const Shape& t = b.shape();
    const char* names[] = {"N", "C", "H", "W"};
    const int lhs[] = {s.n, s.c, s.h, s.w};
    const int rhs[] = {t.n, t.c, t.h, t.w};
    for (int i = 0; i < 4; ++i) {
        if (lhs[i] != rhs[i]) {
            throw DimensionError(names[i], std::string(op) + ": axis " + names[i] + " mismatch " +
                                               s.str() + " vs " + t.str());
        }
    }
}

constexpr int kTileN = 64;

// C[m x n] += alpha * A[m x k] * B[k x n], all row-major and densely packed.
void gemm_nn_accumulate(int m, int n, int k, double alpha, const double* a, const double* b,
                        double* c) {
    for (int j0 = 0; j0 < n; j0 += kTileN) {
        const int j1 = std::min(n, j0 + kTileN);
        int i = 0;
        for (; i + 4 <= m; i += 4) {
            double* c0 = c + static_cast<std::size_t>(i) * n;
            double* c1 = c0 + n;
            double* c2 = c1 + n;
            double* c3 = c2 + n;
            const double* a0 = a + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const double v0 = alpha * a0[p];
                const double v1 = alpha * a0[k + p];
                const double v2 = alpha * a0[2 * k + p];
                const double v3 = alpha * a0[3 * k + p];
                const double* brow = b + static_cast<std::size_t>(p) * n;
                for (int j = j0; j < j1; ++j) {
                    const double bv = brow[j];
                    c0[j] += v0 * bv;
                    c1[j] += v1 * bv;
                    c2[j] += v2 * bv;
                    c3[j] += v3 * bv;
                }
            }
        }
        for (; i < m; ++i) {
            double* crow = c + static_cast<std::size_t>(i) * n;
            const double* arow = a + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const double v = alpha * arow[p];
                const double* brow = b + static_cast<std::size_t>(p) * n;
                for (int j = j0; j < j1; ++j) crow[j] += v * brow[j];
            }
        }
    }
}

std::vector<double> transposed(const double* src, int rows, int cols) {
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int q = 0; q < cols; ++q)
            out[static_cast<std::size_t>(q) * rows + r] = src[static_cast<std::size_t>(r) * cols + q];
    return out;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          const double* b, double beta, double* c) {
    const std::size_t cn = static_cast<std::size_t>(m) * n;
    if (beta == 0.0) {
        std::fill(c, c + cn, 0.0);
    } else if (beta != 1.0) {
        for (std::size_t i = 0; i < cn; ++i) c[i] *= beta;
    }
    std::vector<double> a_buf;
    std::vector<double> b_buf;
    if (trans_a) {
        a_buf = transposed(a, k, m);
        a = a_buf.data();
    }
    if (trans_b) {
        b_buf = transposed(b, n, k);
        b = b_buf.data();
    }
    gemm_nn_accumulate(m, n, k, alpha, a, b, c);
}

void im2col(const double* image, int channels, int height, int width, int k, int stride, int pad,
            double* columns) {
    const int ho = conv_out_size(height, k, stride, pad);
    const int wo = conv_out_size(width, k, stride, pad);
    std::size_t row = 0;
    for (int c = 0; c < channels; ++c) {
        const double* plane = image + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                double* dst = columns + row * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * wo + ox] = (iy >= 0 && iy < height && ix >= 0 && ix < width)
                                                ? plane[iy * width + ix]
                                                : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* columns, int channels, int height, int width, int k, int stride,
            int pad, double* image) {
    const int ho = conv_out_size(height, k, stride, pad);
    const int wo = conv_out_size(width, k, stride, pad);
    std::size_t row = 0;
    for (int c = 0; c < channels; ++c) {
        double* plane = image + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const double* src = columns + row * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < width) plane[iy * width + ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
        throw DimensionError("k", "conv2d: kernel must be 1x1 or 3x3, got " + ws.str());
    }
    if (xs.c != ws.c) {
        throw DimensionError("Cin", "conv2d: input has " + std::to_string(xs.c) +
                                        " channels, weight expects " + std::to_string(ws.c));
    }
    if (stride != 1 && stride != 2) {
        throw std::invalid_argument("conv2d: stride must be 1 or 2");
    }
    const int k = ws.h;
    if (pad != 0 && pad != (k - 1) / 2) {
        throw std::invalid_argument("conv2d: pad must be 0 or (k-1)/2");
    }
    if (bias != nullptr && bias->size() != static_cast<std::size_t>(ws.n)) {
        throw DimensionError("Cout", "conv2d: bias length " + std::to_string(bias->size()) +
                                         " != Cout " + std::to_string(ws.n));
    }
    const int ho = conv_out_size(xs.h, k, stride, pad);
    const int wo = conv_out_size(xs.w, k, stride, pad);
    if (ho < 1 || wo < 1) {
        throw DimensionError("H", "conv2d: input " + xs.str() + " too small for kernel");
    }
    Tensor out(Shape{xs.n, ws.n, ho, wo});
    const int ckk = ws.c * k * k;
    const int hw = ho * wo;
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    std::vector<double> cols(direct ? 0 : static_cast<std::size_t>(ckk) * hw);
    for (int n = 0; n < xs.n; ++n) {
        const double* img = x.data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
        const double* b = img;
        if (!direct) {
            im2col(img, xs.c, xs.h, xs.w, k, stride, pad, cols.data());
            b = cols.data();
        }
        double* dst = out.data().data() + static_cast<std::size_t>(n) * ws.n * hw;
        gemm(false, false, ws.n, hw, ckk, 1.0, weight.data().data(), b, 0.0, dst);
        if (bias != nullptr) {
            for (int o = 0; o < ws.n; ++o) {
                const double bv = (*bias)[o];
                for (int p = 0; p < hw; ++p) dst[o * hw + p] += bv;
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out = x;
    for (double& v : out.data()) v *= factor;
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor channel_concat(const Tensor& a, const Tensor& b) {
    const Shape& s = a.shape();
    const Shape& t = b.shape();
    if (s.n != t.n) throw DimensionError("N", "channel_concat: batch mismatch " + s.str() + " vs " + t.str());
    if (s.h != t.h) throw DimensionError("H", "channel_concat: height mismatch " + s.str() + " vs " + t.str());
    if (s.w != t.w) throw DimensionError("W", "channel_concat: width mismatch " + s.str() + " vs " + t.str());
    Tensor out(Shape{s.n, s.c + t.c, s.h, s.w});
    const std::size_t pa = static_cast<std::size_t>(s.c) * s.plane();
    const std::size_t pb = static_cast<std::size_t>(t.c) * t.plane();
    for (int n = 0; n < s.n; ++n) {
        double* dst = out.data().data() + n * (pa + pb);
        std::copy_n(a.data().data() + n * pa, pa, dst);
        std::copy_n(b.data().data() + n * pb, pb, dst + pa);
    }
    return out;
}

Tensor channel_slice(const Tensor& x, int lo, int hi) {
    const Shape& s = x.shape();
    if (lo < 1 || hi < lo || hi > s.c) {
        throw std::out_of_range("channel_slice: range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "] outside channels 1.." + std::to_string(s.c));
    }
    const int count = hi - lo + 1;
    Tensor out(Shape{s.n, count, s.h, s.w});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        std::copy_n(x.data().data() + (static_cast<std::size_t>(n) * s.c + (lo - 1)) * plane,
                    count * plane, out.data().data() + static_cast<std::size_t>(n) * count * plane);
    }
    return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
    const Shape& s = x.shape();
    Tensor out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < 2 * s.h; ++y)
                for (int xx = 0; xx < 2 * s.w; ++xx) out.at(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
    return out;
}

Tensor softmax_channels(const Tensor& logits) {
    const Shape& s = logits.shape();
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const double* src = logits.data().data() + static_cast<std::size_t>(n) * s.c * plane;
        double* dst = out.data().data() + static_cast<std::size_t>(n) * s.c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < s.c; ++c) mx = std::max(mx, src[c * plane + p]);
            double sum = 0.0;
            for (int c = 0; c < s.c; ++c) {
                const double e = std::exp(src[c * plane + p] - mx);
                dst[c * plane + p] = e;
                sum += e;
            }
            for (int c = 0; c < s.c; ++c) dst[c * plane + p] /= sum;
        }
    }
    return out;
}

SoftmaxCe softmax_ce(const Tensor& logits, const LabelMap& labels, int ignore_index) {
    const Shape& s = logits.shape();
    if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
        throw DimensionError("labels", "softmax_ce: labels " + std::to_string(labels.n) + "x" +
                                           std::to_string(labels.h) + "x" + std::to_string(labels.w) +
                                           " vs logits " + s.str());
    }
    SoftmaxCe result;
    result.probs = softmax_channels(logits);
    const std::size_t plane = s.plane();
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        const double* src = logits.data().data() + static_cast<std::size_t>(n) * s.c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            const int label = labels.data[n * plane + p];
            if (label == ignore_index) continue;
            if (label < 0 || label >= s.c) {
                throw std::out_of_range("softmax_ce: label " + std::to_string(label) +
                                        " outside [0, " + std::to_string(s.c) + ")");
            }
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < s.c; ++c) mx = std::max(mx, src[c * plane + p]);
            double sum = 0.0;
            for (int c = 0; c < s.c; ++c) sum += std::exp(src[c * plane + p] - mx);
            total += (mx + std::log(sum)) - src[label * plane + p];
            ++result.counted;
        }
    }
    result.loss = result.counted > 0 ? total / static_cast<double>(result.counted) : 0.0;
    return result;
}

LabelMap argmax_channels(const Tensor& scores) {
    const Shape& s = scores.shape();
    LabelMap out(s.n, s.h, s.w);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const double* src = scores.data().data() + static_cast<std::size_t>(n) * s.c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            int best = 0;
            for (int c = 1; c < s.c; ++c) {
                if (src[c * plane + p] > src[best * plane + p]) best = c;
            }
            out.data[n * plane + p] = best;
        }
    }
    return out;
}

}  // namespace asymfusion::ops
