#include "asymfusion/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "asymfusion/ops.hpp"

namespace asymfusion {

namespace {

void require_labels(const Shape& s, const LabelMap& labels, const char* op) {
    if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
        throw DimensionError("labels", std::string(op) + ": label map does not match " + s.str());
    }
}

}  // namespace

Tensor softmax_weights(const Tensor& logits) {
    const int s = logits.shape().c;
    Tensor out(Shape{1, s, 1, 1});
    double mx = logits[0];
    for (int i = 1; i < s; ++i) mx = std::max(mx, logits[i]);
    double total = 0.0;
    for (int i = 0; i < s; ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (int i = 0; i < s; ++i) out[i] /= total;
    return out;
}

Tensor mix_probs(const Tensor& alpha, const std::vector<Tensor>& probs) {
    if (probs.empty() || static_cast<int>(probs.size()) != alpha.shape().c) {
        throw std::invalid_argument("mix_probs: need one probability map per weight");
    }
    Tensor out(probs.front().shape());
    for (std::size_t s = 0; s < probs.size(); ++s) {
        if (probs[s].shape() != out.shape()) throw DimensionError("shape", "mix_probs: branch shapes differ");
        const double a = alpha[s];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * probs[s][i];
    }
    return out;
}

Var kl_to_target(Graph& g, Var logits, const Tensor& target, const LabelMap& labels, int ignore_index) {
    const Tensor& z = g.value(logits);
    const Shape s = z.shape();
    if (target.shape() != s) throw DimensionError("shape", "kl_to_target: target " + target.shape().str());
    require_labels(s, labels, "kl_to_target");
    auto probs = std::make_shared<Tensor>(ops::softmax_channels(z));
    const std::size_t plane = s.plane();
    double total = 0.0;
    std::size_t counted = 0;
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            if (labels.data[n * plane + p] == ignore_index) continue;
            ++counted;
            const std::size_t base = static_cast<std::size_t>(n) * s.c * plane + p;
            for (int c = 0; c < s.c; ++c) {
                const double t = target[base + c * plane];
                if (t <= 0.0) continue;
                total += t * (std::log(t) - std::log((*probs)[base + c * plane]));
            }
        }
    }
    const double loss = counted == 0 ? 0.0 : total / static_cast<double>(counted);
    return g.record(
        "kl_to_target", Tensor::scalar(loss), {logits},
        [probs, target, labels, ignore_index, counted](const BackwardArgs& a) {
            if (a.grad_inputs[0] == nullptr || counted == 0) return;
            Tensor& gz = *a.grad_inputs[0];
            const Shape s = gz.shape();
            const std::size_t plane = s.plane();
            const double coef = a.grad_out[0] / static_cast<double>(counted);
            for (int n = 0; n < s.n; ++n) {
                for (std::size_t p = 0; p < plane; ++p) {
                    if (labels.data[n * plane + p] == ignore_index) continue;
                    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane + p;
                    for (int c = 0; c < s.c; ++c) {
                        const std::size_t i = base + c * plane;
                        gz[i] += coef * ((*probs)[i] - target[i]);
                    }
                }
            }
        });
}

Var ensemble_nll(Graph& g, Var w, const std::vector<Tensor>& probs, const LabelMap& labels,
                 int ignore_index) {
    const Tensor alpha = softmax_weights(g.value(w));
    const int branches = alpha.shape().c;
    if (static_cast<int>(probs.size()) != branches) {
        throw std::invalid_argument("ensemble_nll: need one probability map per weight");
    }
    const Shape s = probs.front().shape();
    require_labels(s, labels, "ensemble_nll");
    const std::size_t plane = s.plane();
    // d(-log q)/dw_j = -alpha_j (p_j - q) / q, accumulated per pixel
    auto dw = std::make_shared<std::vector<double>>(branches, 0.0);
    double total = 0.0;
    std::size_t counted = 0;
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            const int label = labels.data[n * plane + p];
            if (label == ignore_index) continue;
            if (label < 0 || label >= s.c) throw std::out_of_range("ensemble_nll: label out of range");
            ++counted;
            const std::size_t i = (static_cast<std::size_t>(n) * s.c + label) * plane + p;
            double q = 0.0;
            for (int b = 0; b < branches; ++b) q += alpha[b] * probs[b][i];
            q = std::max(q, 1e-300);
            total -= std::log(q);
            for (int b = 0; b < branches; ++b) (*dw)[b] -= alpha[b] * (probs[b][i] - q) / q;
        }
    }
    const double scale = counted == 0 ? 0.0 : 1.0 / static_cast<double>(counted);
    for (double& v : *dw) v *= scale;
    return g.record("ensemble_nll", Tensor::scalar(total * scale), {w}, [dw](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        Tensor& gw = *a.grad_inputs[0];
        for (std::size_t b = 0; b < dw->size(); ++b) gw[b] += a.grad_out[0] * (*dw)[b];
    });
}

double mean_kl(const Tensor& p, const Tensor& q) {
    if (p.shape() != q.shape()) throw DimensionError("shape", "mean_kl: shapes differ");
    const Shape s = p.shape();
    const std::size_t plane = s.plane();
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t px = 0; px < plane; ++px) {
            for (int c = 0; c < s.c; ++c) {
                const std::size_t i = (static_cast<std::size_t>(n) * s.c + c) * plane + px;
                if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - std::log(q[i]));
            }
        }
    }
    return total / static_cast<double>(static_cast<std::size_t>(s.n) * plane);
}

}  // namespace asymfusion
