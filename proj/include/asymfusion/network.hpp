#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asymfusion/fusion_ops.hpp"
#include "asymfusion/graph.hpp"
#include "asymfusion/modality_norm.hpp"

namespace asymfusion {

/// Invalid network or run configuration.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// How encoder branches exchange features at a fusion site.
enum class FusionMethod {
    kNone,
    kAsym,       // channel shuffle / pixel shift inside the block
    kConcat,     // pointwise conv over own || donor, at the block output
    kAverage,    // (own + donor) / 2, at the block output
    kAttention,  // attention gate over own || donor, at the block output
};

/// Which branches receive. For two modalities "1->2" means branch 2 (index 1)
/// receives from branch 1 and branch 1 only donates.
enum class Direction { kBidirectional, kOneToTwo, kTwoToOne, kNone };

enum class Sharing {
    kIndividual,    // one encoder conv copy and norm set per modality
    kSharedNorms,   // shared convs, one norm set for all modalities
    kPrivateNorms,  // shared convs, one norm set per modality
};

std::string to_string(FusionMethod m);
std::string to_string(Direction d);
std::string to_string(Sharing s);
FusionMethod parse_fusion_method(const std::string& s);
Direction parse_direction(const std::string& s);
Sharing parse_sharing(const std::string& s);

struct StageSpec {
    int blocks = 1;
    int width = 16;  // block output channels
    int mid = 8;     // bottleneck channels
};

/// Wiring of one residual block.
struct FusionBlockConfig {
    int in = 0;
    int mid = 0;
    int out = 0;
    int stride = 1;
    bool shuffle = false;
    ShuffleConfig shuffle_config;
    bool shift = false;
    ShiftSpec shift_spec;
    /// Cross-branch additions of the unshifted feature.
    bool cross_skip_only = false;
    Direction direction = Direction::kNone;

    /// True when any in-block exchange happens.
    bool fuses() const { return direction != Direction::kNone && (shuffle || shift || cross_skip_only); }
    void validate() const;
};

struct NetConfig {
    int modalities = 2;
    int in_channels = 1;
    int classes = 5;
    int stem_width = 8;
    std::vector<StageSpec> stages{{1, 16, 8}, {1, 32, 8}};
    int decoder_width = 16;
    Sharing sharing = Sharing::kPrivateNorms;
    FusionMethod fusion = FusionMethod::kAsym;
    bool shuffle = true;
    bool shift = true;
    bool cross_skip_only = false;
    double split_fraction = 0.7;
    Direction direction = Direction::kBidirectional;
    /// Hidden width of the attention baseline; 0 picks max(1, width / 4).
    int attention_hidden = 0;
    /// Learnable importance logits. Without them the branches are averaged.
    bool ensemble = true;
    NormOptions norm;

    /// Throws ConfigError.
    void validate() const;
    /// Block `block` (0-based) of stage `stage` (0-based).
    FusionBlockConfig block_config(int stage, int block) const;
    bool is_fusion_site(int stage, int block) const;
    /// Input H and W must be multiples of this.
    int spatial_multiple() const;
};

/// Learnable parameter totals. Running statistics are listed separately.
struct ParamReport {
    std::int64_t conv = 0;                 // every conv weight and bias, including copies
    std::int64_t fusion = 0;               // learnable fusion-site parameters
    std::int64_t encoder_norm_per_set = 0; // 2 * sum of encoder norm channels
    int encoder_norm_sets = 0;
    std::int64_t decoder_norm = 0;
    std::int64_t ensemble = 0;
    std::int64_t total = 0;
    std::int64_t buffers = 0;              // running mean/var entries
    std::int64_t unimodal_total = 0;       // same config with one modality
    double overhead = 0.0;                 // (total - unimodal_total) / unimodal_total

    bool operator==(const ParamReport&) const = default;
};

/// Sum of encoder norm channels (stem, three per block, one per projection).
std::int64_t encoder_norm_channels(const NetConfig& config);

/// Counts parameters from the configuration alone.
ParamReport count_params(const NetConfig& config);

/// Bottleneck table shaped like ResNet101: stem 64, blocks 3/4/23/3 with
/// bottleneck widths 64/128/256/512, no ensemble logits.
NetConfig resnet101_shape(int modalities);
/// Parameter count of the full unimodal segmentation model the ResNet101
/// table is compared against.
inline constexpr std::int64_t kResNet101ReferenceTotal = 118'100'000;

/// Per-branch activations recorded during a forward pass, by site.
struct ActivationTrace {
    std::vector<std::string> sites;
    std::vector<std::vector<Tensor>> values;  // [site][branch]

    void record(const std::string& site, const Graph& g, std::span<const Var> branches);
    const std::vector<Tensor>& at(const std::string& site) const;
};

struct NetOutput {
    std::vector<Var> logits;     // per branch, N x K x H x W
    std::vector<Tensor> probs;   // softmax of each branch
    Tensor alpha;                // 1 x S x 1 x 1 importance scores
    Tensor ensemble;             // sum_s alpha_s * probs_s
};

/// Weight-shared multi-branch encoder with per-modality norms, in-block
/// fusion, a shared decoder and an ensemble over branch predictions.
class AsymFusionNet {
  public:
    AsymFusionNet(NetConfig config, std::uint64_t seed);
    AsymFusionNet(const AsymFusionNet&) = delete;
    AsymFusionNet& operator=(const AsymFusionNet&) = delete;
    AsymFusionNet(AsymFusionNet&&) noexcept;
    AsymFusionNet& operator=(AsymFusionNet&&) noexcept;
    ~AsymFusionNet();

    const NetConfig& config() const;

    /// One input per modality, each N x in_channels x H x W. Train mode uses
    /// batch statistics and updates running statistics.
    NetOutput forward(Graph& g, std::span<const Tensor> inputs, bool train,
                      ActivationTrace* trace = nullptr);

    /// Eval-mode ensemble prediction without keeping a graph.
    Tensor predict(std::span<const Tensor> inputs);

    /// Every learnable array in a fixed order.
    std::vector<Parameter*> parameters();
    /// Running statistics as (name, tensor) in a fixed order.
    std::vector<std::pair<std::string, Tensor*>> buffers();
    Parameter* find_parameter(const std::string& name);

    /// Importance scores softmax(w); uniform when the ensemble is disabled.
    Tensor alpha() const;

    void zero_grad();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Counts parameters by walking a built network.
ParamReport count_params(AsymFusionNet& net);

}  // namespace asymfusion
