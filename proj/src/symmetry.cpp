#include "asymfusion/symmetry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "asymfusion/fusion_ops.hpp"
#include "asymfusion/ops.hpp"
#include "asymfusion/rng.hpp"

namespace asymfusion {

std::string to_string(SymmetryKind kind) {
    switch (kind) {
        case SymmetryKind::kSymmetricConstructive: return "symmetric-constructive";
        case SymmetryKind::kAsymmetricWitness: return "asymmetric-witness";
        case SymmetryKind::kInconclusive: return "inconclusive";
    }
    return "unknown";
}

const std::vector<std::string>& constructive_blocks() {
    static const std::vector<std::string> blocks{"average", "add", "concat", "attention"};
    return blocks;
}

const std::vector<std::string>& searchable_blocks() {
    static const std::vector<std::string> blocks{"channel_shuffle", "shift_fuse", "average", "add", "concat"};
    return blocks;
}

namespace {

constexpr double kConstructiveTolerance = 1e-9;
constexpr double kRidge = 1e-8;

struct PointwiseConv {
    Tensor weight;  // Cout x Cin x 1 x 1
    Tensor bias;    // 1 x Cout x 1 x 1

    Tensor operator()(const Tensor& x) const { return ops::conv2d(x, weight, &bias, 1, 0); }
};

PointwiseConv random_pointwise(int in, int out, Lcg64& rng) {
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    return PointwiseConv{random_normal(Shape{out, in, 1, 1}, rng, std), random_normal(Shape{1, out, 1, 1}, rng, 0.1)};
}

// Parameter-free fused feature F(a, b) for the searchable blocks.
Tensor fuse_free(const std::string& block, const Tensor& a, const Tensor& b, int split) {
    if (block == "average") return ops::scale(ops::add(a, b), 0.5);
    if (block == "add") return ops::add(a, b);
    if (block == "concat") return ops::channel_concat(a, b);
    if (block == "channel_shuffle") return channel_shuffle_at(a, b, split).first;
    if (block == "shift_fuse") return shift_fuse(a, b).first;
    throw std::invalid_argument("unknown fusion block '" + block + "'");
}

int fused_channels(const std::string& block, int channels) {
    return block == "concat" ? 2 * channels : channels;
}

int resolve_split(const ProbeOptions& opt) {
    return opt.split > 0 ? opt.split : ShuffleConfig{}.resolve(opt.channels);
}

// Appends per-pixel rows of `t` (channels as columns) to `rows`, starting at `row`.
void append_rows(const Tensor& t, Eigen::MatrixXd& rows, Eigen::Index row, bool with_bias) {
    const Shape s = t.shape();
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w, ++row) {
                for (int c = 0; c < s.c; ++c) rows(row, c) = t.at(n, c, h, w);
                if (with_bias) rows(row, s.c) = 1.0;
            }
}

}  // namespace

SymmetryVerdict verify_symmetric_by_construction(const std::string& block, int trials,
                                                 const ProbeOptions& options) {
    const auto& known = constructive_blocks();
    if (std::find(known.begin(), known.end(), block) == known.end()) {
        throw std::invalid_argument("verify_symmetric_by_construction: unknown block '" + block + "'");
    }
    if (trials < 1) throw std::invalid_argument("verify_symmetric_by_construction: trials must be >= 1");

    const int c = options.channels;
    Lcg64 rng(options.seed);
    const int fused = fused_channels(block, c);
    const PointwiseConv c1 = random_pointwise(fused, c, rng);
    PointwiseConv c2 = c1;
    if (block == "concat") c2.weight = swap_input_halves(c1.weight);

    std::optional<AttentionWeights> theta1;
    std::optional<AttentionWeights> theta2;
    if (block == "attention") {
        const int hidden = std::max(2, c / 2);
        theta1 = AttentionWeights{random_normal(Shape{hidden, 2 * c, 1, 1}, rng, 1.0 / std::sqrt(2.0 * c)),
                                  random_normal(Shape{1, hidden, 1, 1}, rng, 0.1),
                                  random_normal(Shape{2 * c, hidden, 1, 1}, rng, 1.0 / std::sqrt(1.0 * hidden)),
                                  random_normal(Shape{1, 2 * c, 1, 1}, rng, 0.1)};
        theta2 = theta1->swapped();
    }
    auto fuse = [&](const Tensor& a, const Tensor& b, const std::optional<AttentionWeights>& theta) {
        if (block == "attention") return attention_fuse(a, b, *theta);
        return fuse_free(block, a, b, 0);
    };

    SymmetryVerdict verdict;
    verdict.block = block;
    verdict.method = "construction";
    verdict.trials = trials;
    verdict.tolerance = kConstructiveTolerance;
    const Shape shape{1, c, options.height, options.width};
    for (int t = 0; t < trials; ++t) {
        Lcg64 pair_rng(options.seed ^ splitmix64(static_cast<std::uint64_t>(t) + 1));
        const Tensor x1 = random_normal(shape, pair_rng);
        const Tensor x2 = random_normal(shape, pair_rng);
        const Tensor lhs = c1(fuse(x1, x2, theta1));
        const Tensor rhs = c2(fuse(x2, x1, theta2));
        verdict.residual = std::max(verdict.residual, max_abs_diff(lhs, rhs));
    }
    verdict.verdict = verdict.residual < kConstructiveTolerance ? SymmetryKind::kSymmetricConstructive
                                                                : SymmetryKind::kInconclusive;
    if (block == "concat") verdict.note = "C2 = C1 with input-channel halves exchanged";
    if (block == "attention") verdict.note = "theta2 = theta1 with modality parameter groups exchanged; C2 = C1";
    if (block == "average" || block == "add") verdict.note = "C2 = C1";
    return verdict;
}

SymmetryVerdict refute_symmetry_by_search(const std::string& block, int sample_count, double tolerance,
                                          const ProbeOptions& options) {
    const auto& known = searchable_blocks();
    if (std::find(known.begin(), known.end(), block) == known.end()) {
        throw std::invalid_argument("refute_symmetry_by_search: unknown block '" + block + "'");
    }
    if (sample_count < 1) throw std::invalid_argument("refute_symmetry_by_search: sample_count must be >= 1");

    const int c = options.channels;
    const int split = resolve_split(options);
    const int fused = fused_channels(block, c);
    const bool zero_first = block == "shift_fuse" && options.zero_first;
    Lcg64 rng(options.seed);
    const PointwiseConv c1 = random_pointwise(fused, c, rng);
    const Shape shape{1, c, options.height, options.width};
    const Eigen::Index pixels = static_cast<Eigen::Index>(options.height) * options.width;

    struct Pair {
        Tensor x1, x2;
        std::uint64_t seed;
    };
    auto make_pair = [&](std::uint64_t index) {
        const std::uint64_t seed = options.seed ^ splitmix64(index + 0x51ULL);
        Lcg64 pair_rng(seed);
        Tensor x1 = random_normal(shape, pair_rng);
        Tensor x2 = random_normal(shape, pair_rng);
        if (zero_first) x1 = Tensor::zeros(shape);
        return Pair{std::move(x1), std::move(x2), seed};
    };
    // Regressors: F(x2, x1) per pixel plus a bias column. Targets: C1(F(x1, x2)).
    auto build = [&](const Pair& p, Eigen::MatrixXd& a, Eigen::MatrixXd& b, Eigen::Index row) {
        append_rows(fuse_free(block, p.x2, p.x1, split), a, row, true);
        append_rows(c1(fuse_free(block, p.x1, p.x2, split)), b, row, false);
    };

    Eigen::MatrixXd a(pixels * sample_count, fused + 1);
    Eigen::MatrixXd b(pixels * sample_count, c);
    for (int i = 0; i < sample_count; ++i) build(make_pair(static_cast<std::uint64_t>(i)), a, b, pixels * i);

    SymmetryVerdict verdict;
    verdict.block = block;
    verdict.method = "least-squares";
    verdict.trials = sample_count;
    verdict.tolerance = tolerance;

    Eigen::MatrixXd gram = a.transpose() * a;
    const Eigen::MatrixXd rhs = a.transpose() * b;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double max_eig = eig.eigenvalues().maxCoeff();
    const double min_eig = eig.eigenvalues().minCoeff();
    if (!(min_eig > 1e-12 * std::max(max_eig, 1.0))) {
        gram.diagonal().array() += kRidge;
        verdict.ridge_applied = true;
        verdict.note = "normal equations singular; ridge 1e-8 applied";
    }
    const Eigen::MatrixXd solution = gram.ldlt().solve(rhs);

    const int held_out = std::max(8, sample_count / 4);
    double err_sq = 0.0;
    double ref_sq = 0.0;
    for (int i = 0; i < held_out; ++i) {
        const Pair p = make_pair(static_cast<std::uint64_t>(sample_count + i));
        Eigen::MatrixXd ha(pixels, fused + 1);
        Eigen::MatrixXd hb(pixels, c);
        build(p, ha, hb, 0);
        const double e = (ha * solution - hb).squaredNorm();
        const double r = hb.squaredNorm();
        err_sq += e;
        ref_sq += r;
        const double pair_residual = r > 0.0 ? std::sqrt(e / r) : std::sqrt(e);
        if (i == 0 || pair_residual > verdict.worst_pair_residual) {
            verdict.worst_pair_residual = pair_residual;
            verdict.witness = std::make_pair(p.x1, p.x2);
            verdict.witness_seed = p.seed;
        }
    }
    verdict.residual = ref_sq > 0.0 ? std::sqrt(err_sq / ref_sq) : std::sqrt(err_sq);
    if (verdict.residual > tolerance) {
        verdict.verdict = SymmetryKind::kAsymmetricWitness;
    } else {
        verdict.verdict = SymmetryKind::kInconclusive;
        verdict.witness.reset();
        if (verdict.note.empty()) verdict.note = "a pointwise C2 reproduces C1 on held-out pairs";
    }
    return verdict;
}

}  // namespace asymfusion
