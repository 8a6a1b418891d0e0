#include "asymfusion/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "asymfusion/rng.hpp"

namespace asymfusion {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& loss) {
    Graph g;
    return g.value(loss(g)).item();
}

}  // namespace

GradReport grad_check_params(const std::string& op, std::span<Parameter* const> params,
                             const LossBuilder& loss, double eps) {
    GradReport report;
    report.op = op;
    for (Parameter* p : params) p->zero_grad();
    {
        Graph g;
        Var out = loss(g);
        g.backward(out);
        report.min_relu_margin = g.min_abs_relu_input();
    }
    for (Parameter* p : params) {
        InputGradError err;
        err.name = p->name;
        const Tensor analytic = p->grad;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + eps;
            const double up = evaluate(loss);
            p->value[i] = saved - eps;
            const double down = evaluate(loss);
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double rel = relative_error(analytic[i], numeric);
            if (i == 0 || rel > err.max_rel_error) {
                err.max_rel_error = rel;
                err.worst_index = i;
                err.analytic = analytic[i];
                err.numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
        report.inputs.push_back(err);
    }
    return report;
}

GradReport grad_check(const std::string& op, const OpBuilder& build, std::vector<Tensor> inputs,
                      std::vector<std::string> names, double eps, std::uint64_t projection_seed) {
    std::vector<std::unique_ptr<Parameter>> owned;
    std::vector<Parameter*> params;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::string name = i < names.size() ? names[i] : "input" + std::to_string(i);
        owned.push_back(std::make_unique<Parameter>(name, inputs[i], ParamKind::kConvWeight));
        params.push_back(owned.back().get());
    }
    auto projection = std::make_shared<std::optional<Tensor>>();
    LossBuilder loss = [&](Graph& g) {
        std::vector<Var> vars;
        for (Parameter* p : params) vars.push_back(g.param(*p));
        Var out = build(g, vars);
        if (g.value(out).size() == 1) return out;
        if (!*projection) {
            Lcg64 rng(projection_seed);
            *projection = random_uniform(g.value(out).shape(), rng, 0.5, 1.5);
        }
        return weighted_sum(g, out, **projection);
    };
    return grad_check_params(op, params, loss, eps);
}

}  // namespace asymfusion
