#include "asymfusion/modality_norm.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace asymfusion {

namespace {

std::string suffix(NormMode mode, int set) {
    return mode == NormMode::kShared ? std::string() : ".m" + std::to_string(set);
}

}  // namespace

std::pair<Tensor, Tensor> channel_moments(const Tensor& x) {
    const Shape s = x.shape();
    Tensor mean(Shape{1, s.c, 1, 1});
    Tensor var(Shape{1, s.c, 1, 1});
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * plane;
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* src = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) acc += src[p];
        }
        const double mu = acc / count;
        double sq = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* src = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) sq += (src[p] - mu) * (src[p] - mu);
        }
        mean[c] = mu;
        var[c] = sq / count;
    }
    return {mean, var};
}

Var batch_norm_train(Graph& g, Var x, Var gamma, Var beta, double eps, Tensor* batch_mean,
                     Tensor* batch_var) {
    const Tensor& xv = g.value(x);
    const Shape s = xv.shape();
    auto [mean, var] = channel_moments(xv);
    auto inv_std = std::make_shared<Tensor>(Shape{1, s.c, 1, 1});
    for (int c = 0; c < s.c; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);

    const Tensor& gv = g.value(gamma);
    const Tensor& bv = g.value(beta);
    const std::size_t plane = s.plane();
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            const double k = gv[c] * (*inv_std)[c];
            for (std::size_t p = 0; p < plane; ++p) out[base + p] = k * (xv[base + p] - mean[c]) + bv[c];
        }
    }
    if (batch_mean != nullptr) *batch_mean = mean;
    if (batch_var != nullptr) *batch_var = var;

    auto mean_ptr = std::make_shared<Tensor>(std::move(mean));
    return g.record(
        "batch_norm_train", std::move(out), {x, gamma, beta},
        [inv_std, mean_ptr](const BackwardArgs& a) {
            const Tensor& xv = *a.inputs[0];
            const Tensor& gv = *a.inputs[1];
            const Shape s = xv.shape();
            const std::size_t plane = s.plane();
            const double m = static_cast<double>(s.n) * plane;
            for (int c = 0; c < s.c; ++c) {
                const double mu = (*mean_ptr)[c];
                const double is = (*inv_std)[c];
                double sum_dy = 0.0;
                double sum_dy_xhat = 0.0;
                for (int n = 0; n < s.n; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    for (std::size_t p = 0; p < plane; ++p) {
                        const double dy = a.grad_out[base + p];
                        sum_dy += dy;
                        sum_dy_xhat += dy * (xv[base + p] - mu) * is;
                    }
                }
                if (Tensor* gg = a.grad_inputs[1]) (*gg)[c] += sum_dy_xhat;
                if (Tensor* gb = a.grad_inputs[2]) (*gb)[c] += sum_dy;
                if (Tensor* gx = a.grad_inputs[0]) {
                    // dxhat = dy * gamma; sums over dxhat are gamma times the dy sums.
                    const double k = gv[c] * is / m;
                    for (int n = 0; n < s.n; ++n) {
                        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                        for (std::size_t p = 0; p < plane; ++p) {
                            const double xhat = (xv[base + p] - mu) * is;
                            (*gx)[base + p] += k * (m * a.grad_out[base + p] - sum_dy - xhat * sum_dy_xhat);
                        }
                    }
                }
            }
        });
}

Var batch_norm_eval(Graph& g, Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var,
                    double eps) {
    const Tensor& xv = g.value(x);
    const Shape s = xv.shape();
    auto inv_std = std::make_shared<Tensor>(Shape{1, s.c, 1, 1});
    for (int c = 0; c < s.c; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);
    auto mean_ptr = std::make_shared<Tensor>(mean);
    const Tensor& gv = g.value(gamma);
    const Tensor& bv = g.value(beta);
    const std::size_t plane = s.plane();
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            const double k = gv[c] * (*inv_std)[c];
            for (std::size_t p = 0; p < plane; ++p) out[base + p] = k * (xv[base + p] - mean[c]) + bv[c];
        }
    }
    return g.record("batch_norm_eval", std::move(out), {x, gamma, beta},
                    [inv_std, mean_ptr](const BackwardArgs& a) {
                        const Tensor& xv = *a.inputs[0];
                        const Tensor& gv = *a.inputs[1];
                        const Shape s = xv.shape();
                        const std::size_t plane = s.plane();
                        for (int n = 0; n < s.n; ++n) {
                            for (int c = 0; c < s.c; ++c) {
                                const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                                const double is = (*inv_std)[c];
                                for (std::size_t p = 0; p < plane; ++p) {
                                    const double dy = a.grad_out[base + p];
                                    if (Tensor* gx = a.grad_inputs[0]) (*gx)[base + p] += dy * gv[c] * is;
                                    if (Tensor* gg = a.grad_inputs[1]) (*gg)[c] += dy * (xv[base + p] - (*mean_ptr)[c]) * is;
                                    if (Tensor* gb = a.grad_inputs[2]) (*gb)[c] += dy;
                                }
                            }
                        }
                    });
}

ModalityNorm::ModalityNorm(std::string name, int channels, int modalities, NormMode mode,
                           NormOptions options)
    : name_(std::move(name)),
      channels_(channels),
      modalities_(modalities),
      mode_(mode),
      options_(options) {
    if (channels < 1) throw std::invalid_argument("ModalityNorm: channels must be >= 1");
    if (modalities < 1) throw std::invalid_argument("ModalityNorm: modalities must be >= 1");
    const int sets = mode == NormMode::kShared ? 1 : modalities;
    const Shape cs{1, channels, 1, 1};
    gammas_.reserve(sets);
    betas_.reserve(sets);
    for (int s = 0; s < sets; ++s) {
        gammas_.emplace_back(name_ + ".gamma" + suffix(mode, s), Tensor::ones(cs), ParamKind::kNormScale);
        betas_.emplace_back(name_ + ".beta" + suffix(mode, s), Tensor::zeros(cs), ParamKind::kNormShift);
        running_mean_.push_back(Tensor::zeros(cs));
        running_var_.push_back(Tensor::ones(cs));
    }
}

int ModalityNorm::slot(int modality) const {
    if (modality < 0 || modality >= modalities_) {
        throw std::out_of_range("ModalityNorm " + name_ + ": modality " + std::to_string(modality) +
                                " outside [0, " + std::to_string(modalities_) + ")");
    }
    return mode_ == NormMode::kShared ? 0 : modality;
}

void ModalityNorm::check_input(const Tensor& x, int modality) const {
    slot(modality);
    if (x.shape().c != channels_) {
        throw DimensionError("C", "ModalityNorm " + name_ + ": expected " + std::to_string(channels_) +
                                      " channels, got " + std::to_string(x.shape().c));
    }
}

void ModalityNorm::update_running(int modality, const Tensor& batch_mean, const Tensor& batch_var) {
    Tensor& rm = running_mean(modality);
    Tensor& rv = running_var(modality);
    const double m = options_.momentum;
    for (int c = 0; c < channels_; ++c) {
        rm[c] = (1.0 - m) * rm[c] + m * batch_mean[c];
        rv[c] = (1.0 - m) * rv[c] + m * batch_var[c];
    }
}

Tensor ModalityNorm::forward_train(const Tensor& x, int modality) {
    Graph g;
    return g.value(forward(g, g.constant(x), modality, true));
}

Tensor ModalityNorm::forward_eval(const Tensor& x, int modality) const {
    check_input(x, modality);
    Graph g;
    // Parameter leaves only read the values; const_cast keeps the graph API uniform.
    auto& self = const_cast<ModalityNorm&>(*this);
    Var out = batch_norm_eval(g, g.constant(x), g.param(self.gamma(modality)), g.param(self.beta(modality)),
                              running_mean(modality), running_var(modality), options_.eps);
    return g.value(out);
}

Var ModalityNorm::forward(Graph& g, Var x, int modality, bool train) {
    check_input(g.value(x), modality);
    Var gamma_v = g.param(gamma(modality));
    Var beta_v = g.param(beta(modality));
    if (!train) {
        return batch_norm_eval(g, x, gamma_v, beta_v, running_mean(modality), running_var(modality),
                               options_.eps);
    }
    Tensor batch_mean;
    Tensor batch_var;
    Var out = batch_norm_train(g, x, gamma_v, beta_v, options_.eps, &batch_mean, &batch_var);
    update_running(modality, batch_mean, batch_var);
    return out;
}

std::vector<Parameter*> ModalityNorm::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t s = 0; s < gammas_.size(); ++s) {
        out.push_back(&gammas_[s]);
        out.push_back(&betas_[s]);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ModalityNorm::buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t s = 0; s < running_mean_.size(); ++s) {
        const std::string sfx = suffix(mode_, static_cast<int>(s));
        out.emplace_back(name_ + ".running_mean" + sfx, &running_mean_[s]);
        out.emplace_back(name_ + ".running_var" + sfx, &running_var_[s]);
    }
    return out;
}

}  // namespace asymfusion
