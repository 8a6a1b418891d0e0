#include "asymfusion/train.hpp"

#include <cmath>
#include <sstream>

#include "asymfusion/losses.hpp"

namespace asymfusion {

namespace {

std::string describe(const LossTerms& t) {
    std::ostringstream os;
    os << "non-finite loss: total=" << t.total << " ce=[";
    for (std::size_t i = 0; i < t.branch_ce.size(); ++i) os << (i ? "," : "") << t.branch_ce[i];
    os << "] distill=" << t.distill << " ensemble_ce=" << t.ensemble_ce;
    return os.str();
}

}  // namespace

Var build_loss(Graph& g, AsymFusionNet& net, const NetOutput& out, const LabelMap& labels,
               const LossConfig& cfg, LossTerms* terms) {
    LossTerms local;
    std::optional<Var> total;
    auto accumulate = [&](Var v) { total = total ? add(g, *total, v) : v; };

    for (Var logits : out.logits) {
        Var ce = softmax_ce(g, logits, labels, cfg.ignore_index);
        local.branch_ce.push_back(g.value(ce).item());
        accumulate(ce);
    }
    if (cfg.distill && cfg.distill_weight != 0.0) {
        std::optional<Var> kl;
        for (Var logits : out.logits) {
            Var term = kl_to_target(g, logits, out.ensemble, labels, cfg.ignore_index);
            kl = kl ? add(g, *kl, term) : term;
        }
        local.distill = g.value(*kl).item();
        accumulate(scale(g, *kl, cfg.distill_weight));
    }
    if (Parameter* w = net.find_parameter("ens.logits")) {
        Var nll = ensemble_nll(g, g.param(*w), out.probs, labels, cfg.ignore_index);
        local.ensemble_ce = g.value(nll).item();
        accumulate(nll);
    }
    local.total = g.value(*total).item();
    if (terms != nullptr) *terms = local;
    return *total;
}

double SgdOptimizer::lr_at(std::int64_t iter, std::int64_t total) const {
    if (total <= 0) return config_.lr;
    const double frac = std::max(0.0, 1.0 - static_cast<double>(iter) / static_cast<double>(total));
    return config_.lr * std::pow(frac, config_.poly_power);
}

void SgdOptimizer::step(std::span<Parameter* const> params, double lr) {
    for (Parameter* p : params) {
        auto [it, fresh] = velocity_.try_emplace(p->name, p->value.shape());
        Tensor& v = it->second;
        const double wd = p->kind == ParamKind::kConvWeight ? config_.weight_decay : 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = config_.momentum * v[i] + p->grad[i] + wd * p->value[i];
            p->value[i] -= lr * v[i];
        }
    }
    ++iteration_;
}

LossTerms train_step(AsymFusionNet& net, SgdOptimizer& opt, const Batch& batch, const LossConfig& cfg,
                     double lr) {
    Graph g;
    NetOutput out = net.forward(g, batch.inputs, true);
    LossTerms terms;
    Var loss = build_loss(g, net, out, batch.labels, cfg, &terms);
    if (!std::isfinite(terms.total)) throw TrainingError(describe(terms));
    net.zero_grad();
    g.backward(loss);
    const std::vector<Parameter*> params = net.parameters();
    opt.step(params, lr);
    return terms;
}

double batch_loss(AsymFusionNet& net, const Batch& batch, const LossConfig& cfg) {
    std::vector<Tensor> saved;
    auto bufs = net.buffers();
    for (auto& [name, t] : bufs) saved.push_back(*t);
    Graph g;
    NetOutput out = net.forward(g, batch.inputs, true);
    const double v = g.value(build_loss(g, net, out, batch.labels, cfg)).item();
    for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].second = saved[i];
    return v;
}

}  // namespace asymfusion
