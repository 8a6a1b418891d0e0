#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asymfusion/network.hpp"

namespace asymfusion {

/// Raised when a loss turns non-finite. what() carries the loss terms.
class TrainingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct LossConfig {
    bool distill = true;
    double distill_weight = 0.5;  // lambda
    int ignore_index = -1;
};

struct LossTerms {
    std::vector<double> branch_ce;
    double distill = 0.0;   // sum_s KL(ensemble || p_s), before lambda
    double ensemble_ce = 0.0;
    double total = 0.0;
};

/// sum_s CE(logits_s) + lambda * sum_s KL(ens || softmax(logits_s)) + CE(ens).
/// The ensemble is a constant target in the KL term and its own CE only
/// reaches the importance logits.
Var build_loss(Graph& g, AsymFusionNet& net, const NetOutput& out, const LabelMap& labels,
               const LossConfig& cfg, LossTerms* terms = nullptr);

struct OptimizerConfig {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;  // conv weights only
    double poly_power = 0.9;
};

/// SGD with momentum:  v <- mu*v + g (+ wd*p for conv weights);  p <- p - lr*v.
class SgdOptimizer {
  public:
    explicit SgdOptimizer(OptimizerConfig config = {}) : config_(config) {}

    /// lr * (1 - iter / total)^power.
    double lr_at(std::int64_t iter, std::int64_t total) const;
    void step(std::span<Parameter* const> params, double lr);

    const OptimizerConfig& config() const { return config_; }
    std::int64_t iteration() const { return iteration_; }
    void set_iteration(std::int64_t it) { iteration_ = it; }
    /// Momentum buffers by parameter name; created on first step.
    std::map<std::string, Tensor>& velocity() { return velocity_; }
    const std::map<std::string, Tensor>& velocity() const { return velocity_; }

  private:
    OptimizerConfig config_;
    std::int64_t iteration_ = 0;
    std::map<std::string, Tensor> velocity_;
};

struct Batch {
    std::vector<Tensor> inputs;  // one per modality, N x C x H x W
    LabelMap labels;
};

/// Forward, backward and one optimizer step at `lr`. Throws TrainingError on
/// a non-finite loss before touching any parameter.
LossTerms train_step(AsymFusionNet& net, SgdOptimizer& opt, const Batch& batch, const LossConfig& cfg,
                     double lr);

/// Loss of a batch in train mode without updating anything, running
/// statistics included.
double batch_loss(AsymFusionNet& net, const Batch& batch, const LossConfig& cfg);

}  // namespace asymfusion
