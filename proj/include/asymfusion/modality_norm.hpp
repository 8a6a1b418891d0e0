#pragma once

#include <string>
#include <vector>

#include "asymfusion/graph.hpp"

namespace asymfusion {

enum class NormMode {
    kPrivate,  // one statistic/affine set per modality
    kShared,   // every modality aliases a single set
};

struct NormOptions {
    double eps = 1e-5;
    double momentum = 0.1;
};

/// Batch normalization with per-modality running statistics and affine
/// parameters:
///
///   y_s = gamma_s * (x_s - mu_s) / sqrt(var_s + eps) + beta_s
///
/// In train mode mu/var are the biased batch statistics over N,H,W and the
/// running statistics of modality s move toward them with `momentum`.
/// Modality indices are 0-based.
class ModalityNorm {
  public:
    ModalityNorm(std::string name, int channels, int modalities, NormMode mode,
                 NormOptions options = {});
    ModalityNorm(const ModalityNorm&) = delete;
    ModalityNorm& operator=(const ModalityNorm&) = delete;
    ModalityNorm(ModalityNorm&&) = default;
    ModalityNorm& operator=(ModalityNorm&&) = default;

    Tensor forward_train(const Tensor& x, int modality);
    Tensor forward_eval(const Tensor& x, int modality) const;

    /// Graph form; in train mode this also updates the running statistics.
    Var forward(Graph& g, Var x, int modality, bool train);

    const std::string& name() const { return name_; }
    int channels() const { return channels_; }
    int modalities() const { return modalities_; }
    NormMode mode() const { return mode_; }
    const NormOptions& options() const { return options_; }

    Parameter& gamma(int modality) { return gammas_[slot(modality)]; }
    Parameter& beta(int modality) { return betas_[slot(modality)]; }
    const Parameter& gamma(int modality) const { return gammas_[slot(modality)]; }
    const Parameter& beta(int modality) const { return betas_[slot(modality)]; }
    Tensor& running_mean(int modality) { return running_mean_[slot(modality)]; }
    Tensor& running_var(int modality) { return running_var_[slot(modality)]; }
    const Tensor& running_mean(int modality) const { return running_mean_[slot(modality)]; }
    const Tensor& running_var(int modality) const { return running_var_[slot(modality)]; }

    /// Number of distinct statistic/parameter sets (1 when shared).
    int set_count() const { return static_cast<int>(gammas_.size()); }
    std::size_t learnable_count() const { return 2 * static_cast<std::size_t>(channels_) * set_count(); }
    std::size_t buffer_count() const { return learnable_count(); }

    /// Distinct learnable arrays, set by set (gamma then beta).
    std::vector<Parameter*> parameters();
    /// Running statistics as (name, tensor) pairs, set by set.
    std::vector<std::pair<std::string, Tensor*>> buffers();

    int slot(int modality) const;

  private:
    void check_input(const Tensor& x, int modality) const;
    void update_running(int modality, const Tensor& batch_mean, const Tensor& batch_var);

    std::string name_;
    int channels_;
    int modalities_;
    NormMode mode_;
    NormOptions options_;
    std::vector<Parameter> gammas_;
    std::vector<Parameter> betas_;
    std::vector<Tensor> running_mean_;
    std::vector<Tensor> running_var_;
};

/// Per-channel biased mean and variance over N,H,W, each 1 x C x 1 x 1.
std::pair<Tensor, Tensor> channel_moments(const Tensor& x);

/// Train-mode normalization node. Fills `batch_mean`/`batch_var` when given.
Var batch_norm_train(Graph& g, Var x, Var gamma, Var beta, double eps,
                     Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr);

/// Normalization node with fixed statistics.
Var batch_norm_eval(Graph& g, Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var,
                    double eps);

}  // namespace asymfusion
