#include "asymfusion/grad_suite.hpp"

#include "asymfusion/fusion_ops.hpp"
#include "asymfusion/losses.hpp"
#include "asymfusion/modality_norm.hpp"
#include "asymfusion/network.hpp"
#include "asymfusion/ops.hpp"
#include "asymfusion/rng.hpp"

namespace asymfusion {

namespace {

constexpr double kOpTolerance = 1e-6;
constexpr double kNetTolerance = 1e-5;

LabelMap random_labels(Lcg64& rng, int n, int h, int w, int classes) {
    LabelMap m(n, h, w);
    for (int& v : m.data) v = rng.uniform_int(classes);
    return m;
}

// Seeds are resampled until no relu input sits within 10*eps of its kink.
GradReport tiny_network_check() {
    NetConfig c;
    c.in_channels = 2;  // one channel makes the stem scale-invariant under BN
    c.stem_width = 4;
    c.stages = {{1, 8, 4}, {1, 8, 4}};
    c.decoder_width = 4;
    c.classes = 3;
    const double eps = 1e-5;
    for (std::uint64_t seed = 1; seed < 500; ++seed) {
        AsymFusionNet net(c, seed);
        Lcg64 rng(seed + 1000);
        const std::vector<Tensor> inputs = {random_normal(Shape{2, 2, 4, 4}, rng),
                                            random_normal(Shape{2, 2, 4, 4}, rng)};
        const LabelMap labels = random_labels(rng, 2, 4, 4, 3);
        Graph probe;
        net.forward(probe, inputs, true);
        if (probe.min_abs_relu_input() < 10 * eps) continue;
        std::vector<Parameter*> params;
        for (Parameter* p : net.parameters()) {
            if (p->kind != ParamKind::kEnsembleLogit) params.push_back(p);
        }
        return grad_check_params(
            "tiny_network",
            params,
            [&](Graph& g) {
                const NetOutput out = net.forward(g, inputs, true);
                Var loss = softmax_ce(g, out.logits[0], labels);
                return add(g, loss, softmax_ce(g, out.logits[1], labels));
            },
            eps);
    }
    GradReport failed;
    failed.op = "tiny_network";
    failed.max_rel_error = 1e300;
    return failed;
}

}  // namespace

std::vector<SuiteResult> run_gradient_suite() {
    std::vector<SuiteResult> out;
    auto op = [&](GradReport r) { out.push_back({std::move(r), kOpTolerance}); };
    Lcg64 rng(20240);

    op(grad_check(
        "conv2d_3x3_s2",
        [](Graph& g, std::span<const Var> in) { return conv2d(g, in[0], in[1], in[2], 2, 1); },
        {random_normal(Shape{2, 3, 5, 5}, rng), random_normal(Shape{4, 3, 3, 3}, rng),
         random_normal(Shape{1, 4, 1, 1}, rng)},
        {"x", "weight", "bias"}));
    op(grad_check(
        "conv2d_1x1",
        [](Graph& g, std::span<const Var> in) { return conv2d(g, in[0], in[1], std::nullopt, 1, 0); },
        {random_normal(Shape{2, 4, 3, 3}, rng), random_normal(Shape{5, 4, 1, 1}, rng)}, {"x", "weight"}));
    op(grad_check(
        "relu",
        [](Graph& g, std::span<const Var> in) { return relu(g, in[0]); },
        {random_uniform(Shape{1, 2, 3, 3}, rng, 0.1, 1.0)}, {"x"}));
    op(grad_check(
        "batch_norm_train",
        [](Graph& g, std::span<const Var> in) { return batch_norm_train(g, in[0], in[1], in[2], 1e-5); },
        {random_normal(Shape{3, 4, 3, 3}, rng), random_uniform(Shape{1, 4, 1, 1}, rng, 0.5, 1.5),
         random_normal(Shape{1, 4, 1, 1}, rng)},
        {"x", "gamma", "beta"}));
    {
        const Tensor mean = random_normal(Shape{1, 4, 1, 1}, rng);
        const Tensor var = random_uniform(Shape{1, 4, 1, 1}, rng, 0.5, 2.0);
        op(grad_check(
            "batch_norm_eval",
            [&](Graph& g, std::span<const Var> in) {
                return batch_norm_eval(g, in[0], in[1], in[2], mean, var, 1e-5);
            },
            {random_normal(Shape{2, 4, 3, 3}, rng), random_uniform(Shape{1, 4, 1, 1}, rng, 0.5, 1.5),
             random_normal(Shape{1, 4, 1, 1}, rng)},
            {"x", "gamma", "beta"}));
    }
    op(grad_check(
        "channel_shuffle",
        [](Graph& g, std::span<const Var> in) {
            auto [f1, f2] = channel_shuffle(g, in[0], in[1], 5);
            return channel_concat(g, f1, scale(g, f2, 2.0));
        },
        {random_normal(Shape{2, 8, 3, 3}, rng), random_normal(Shape{2, 8, 3, 3}, rng)}, {"x1", "x2"}));
    op(grad_check(
        "shift_fuse",
        [](Graph& g, std::span<const Var> in) {
            auto [f1, f2] = shift_fuse(g, in[0], in[1]);
            return channel_concat(g, f1, f2);
        },
        {random_normal(Shape{2, 8, 4, 5}, rng), random_normal(Shape{2, 8, 4, 5}, rng)}, {"x1", "x2"}));
    op(grad_check(
        "attention_fuse",
        [](Graph& g, std::span<const Var> in) { return attention_fuse(g, in[0], in[1], in[2], in[3], in[4], in[5]); },
        {random_normal(Shape{1, 4, 3, 3}, rng), random_normal(Shape{1, 4, 3, 3}, rng),
         random_normal(Shape{3, 8, 1, 1}, rng), random_uniform(Shape{1, 3, 1, 1}, rng, 0.5, 1.0),
         random_normal(Shape{8, 3, 1, 1}, rng), random_normal(Shape{1, 8, 1, 1}, rng)},
        {"x1", "x2", "w1", "b1", "w2", "b2"}));
    op(grad_check(
        "upsample_concat_slice",
        [](Graph& g, std::span<const Var> in) {
            return channel_slice(g, upsample_nearest2x(g, channel_concat(g, in[0], in[1])), 2, 4);
        },
        {random_normal(Shape{1, 2, 2, 3}, rng), random_normal(Shape{1, 3, 2, 3}, rng)}, {"a", "b"}));
    {
        LabelMap labels = random_labels(rng, 2, 3, 3, 4);
        labels.at(1, 2, 2) = -1;
        op(grad_check(
            "softmax_ce",
            [&](Graph& g, std::span<const Var> in) { return softmax_ce(g, in[0], labels); },
            {random_normal(Shape{2, 4, 3, 3}, rng)}, {"logits"}));
        const Tensor target = ops::softmax_channels(random_normal(Shape{2, 4, 3, 3}, rng));
        op(grad_check(
            "kl_to_target",
            [&](Graph& g, std::span<const Var> in) { return kl_to_target(g, in[0], target, labels); },
            {random_normal(Shape{2, 4, 3, 3}, rng)}, {"logits"}));
        const std::vector<Tensor> probs = {ops::softmax_channels(random_normal(Shape{2, 4, 3, 3}, rng)),
                                           ops::softmax_channels(random_normal(Shape{2, 4, 3, 3}, rng))};
        op(grad_check(
            "ensemble_nll",
            [&](Graph& g, std::span<const Var> in) { return ensemble_nll(g, in[0], probs, labels); },
            {random_normal(Shape{1, 2, 1, 1}, rng)}, {"w"}));
    }
    out.push_back({tiny_network_check(), kNetTolerance});
    return out;
}

}  // namespace asymfusion
