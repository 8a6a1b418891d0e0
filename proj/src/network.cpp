#include "asymfusion/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "asymfusion/losses.hpp"
#include "asymfusion/ops.hpp"
#include "asymfusion/rng.hpp"

namespace asymfusion {

std::string to_string(FusionMethod m) {
    switch (m) {
        case FusionMethod::kNone: return "none";
        case FusionMethod::kAsym: return "asym";
        case FusionMethod::kConcat: return "concat";
        case FusionMethod::kAverage: return "average";
        case FusionMethod::kAttention: return "attention";
    }
    return "?";
}

std::string to_string(Direction d) {
    switch (d) {
        case Direction::kBidirectional: return "bidirectional";
        case Direction::kOneToTwo: return "1->2";
        case Direction::kTwoToOne: return "2->1";
        case Direction::kNone: return "none";
    }
    return "?";
}

std::string to_string(Sharing s) {
    switch (s) {
        case Sharing::kIndividual: return "individual";
        case Sharing::kSharedNorms: return "shared-norms";
        case Sharing::kPrivateNorms: return "private-norms";
    }
    return "?";
}

FusionMethod parse_fusion_method(const std::string& s) {
    for (FusionMethod m : {FusionMethod::kNone, FusionMethod::kAsym, FusionMethod::kConcat,
                           FusionMethod::kAverage, FusionMethod::kAttention}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown fusion method '" + s + "' (none, asym, concat, average, attention)");
}

Direction parse_direction(const std::string& s) {
    for (Direction d : {Direction::kBidirectional, Direction::kOneToTwo, Direction::kTwoToOne, Direction::kNone}) {
        if (to_string(d) == s) return d;
    }
    throw ConfigError("unknown direction '" + s + "' (bidirectional, 1->2, 2->1, none)");
}

Sharing parse_sharing(const std::string& s) {
    for (Sharing v : {Sharing::kIndividual, Sharing::kSharedNorms, Sharing::kPrivateNorms}) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("unknown sharing strategy '" + s + "' (individual, shared-norms, private-norms)");
}

void FusionBlockConfig::validate() const {
    if (in < 1 || mid < 1 || out < 1) throw ConfigError("block widths must be positive");
    if (stride != 1 && stride != 2) throw ConfigError("block stride must be 1 or 2");
    if (direction == Direction::kNone) return;
    if ((shuffle || shift || cross_skip_only) && mid < 2) {
        throw ConfigError("fusion block needs at least 2 bottleneck channels");
    }
    if (shift && !cross_skip_only && mid % 4 != 0) {
        throw ConfigError("pixel shift needs a bottleneck width divisible by 4, got " + std::to_string(mid));
    }
    if (shift) shift_spec.validate();
}

namespace {

Direction effective_direction(const NetConfig& c) {
    return c.modalities < 2 ? Direction::kNone : c.direction;
}

bool output_fusion(FusionMethod m) {
    return m == FusionMethod::kConcat || m == FusionMethod::kAverage || m == FusionMethod::kAttention;
}

int attention_width(const NetConfig& c, int channels) {
    return c.attention_hidden > 0 ? c.attention_hidden : std::max(1, channels / 4);
}

}  // namespace

void NetConfig::validate() const {
    if (modalities < 1) throw ConfigError("modalities must be >= 1");
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (stem_width < 1) throw ConfigError("stem_width must be >= 1");
    if (decoder_width < 1) throw ConfigError("decoder_width must be >= 1");
    if (stages.size() < 2) throw ConfigError("at least 2 encoder stages are required");
    for (const StageSpec& st : stages) {
        if (st.blocks < 1 || st.width < 1 || st.mid < 1) {
            throw ConfigError("stage blocks, width and mid must be positive");
        }
    }
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split_fraction must lie in (0, 1)");
    if ((direction == Direction::kOneToTwo || direction == Direction::kTwoToOne) && modalities != 2) {
        throw ConfigError("unidirectional fusion needs exactly 2 modalities");
    }
    if (attention_hidden < 0) throw ConfigError("attention_hidden must be >= 0");
    if (!(norm.eps > 0.0)) throw ConfigError("norm eps must be positive");
    if (!(norm.momentum >= 0.0 && norm.momentum <= 1.0)) throw ConfigError("norm momentum must lie in [0, 1]");
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (int b = 0; b < stages[s].blocks; ++b) block_config(static_cast<int>(s), b).validate();
    }
}

bool NetConfig::is_fusion_site(int stage, int block) const {
    return block == stages.at(stage).blocks - 1;
}

FusionBlockConfig NetConfig::block_config(int stage, int block) const {
    const StageSpec& st = stages.at(stage);
    FusionBlockConfig b;
    b.in = block > 0 ? st.width : (stage == 0 ? stem_width : stages[stage - 1].width);
    b.mid = st.mid;
    b.out = st.width;
    b.stride = (block == 0 && stage > 0) ? 2 : 1;
    if (fusion == FusionMethod::kAsym && is_fusion_site(stage, block)) {
        b.shuffle = shuffle;
        b.shuffle_config.split_fraction = split_fraction;
        b.shift = shift;
        b.cross_skip_only = cross_skip_only;
        b.direction = effective_direction(*this);
    }
    return b;
}

int NetConfig::spatial_multiple() const {
    return 1 << (static_cast<int>(stages.size()) - 1);
}

std::int64_t encoder_norm_channels(const NetConfig& config) {
    std::int64_t total = config.stem_width;
    for (const StageSpec& st : config.stages) {
        total += static_cast<std::int64_t>(st.blocks) * (2 * st.mid + st.width);
        total += st.width;  // projection norm on the first block
    }
    return total;
}

ParamReport count_params(const NetConfig& config) {
    config.validate();
    ParamReport r;
    const std::int64_t copies = config.sharing == Sharing::kIndividual ? config.modalities : 1;
    std::int64_t encoder_conv = static_cast<std::int64_t>(config.in_channels) * config.stem_width;
    for (std::size_t s = 0; s < config.stages.size(); ++s) {
        for (int b = 0; b < config.stages[s].blocks; ++b) {
            const FusionBlockConfig bc = config.block_config(static_cast<int>(s), b);
            encoder_conv += static_cast<std::int64_t>(bc.in) * bc.mid + 9LL * bc.mid * bc.mid +
                            static_cast<std::int64_t>(bc.mid) * bc.out;
            if (b == 0) encoder_conv += static_cast<std::int64_t>(bc.in) * bc.out;
        }
    }
    const int steps = static_cast<int>(config.stages.size()) - 1;
    std::int64_t decoder_conv = 0;
    int cin = config.stages.back().width;
    for (int i = 0; i < steps; ++i) {
        decoder_conv += 9LL * cin * config.decoder_width;
        cin = config.decoder_width;
    }
    decoder_conv += static_cast<std::int64_t>(cin) * config.classes + config.classes;
    r.conv = copies * encoder_conv + decoder_conv;

    if (output_fusion(config.fusion) && effective_direction(config) != Direction::kNone) {
        for (const StageSpec& st : config.stages) {
            const std::int64_t c = st.width;
            if (config.fusion == FusionMethod::kConcat) r.fusion += 2 * c * c;
            if (config.fusion == FusionMethod::kAttention) {
                const std::int64_t h = attention_width(config, st.width);
                r.fusion += h * 2 * c + h + 2 * c * h + 2 * c;
            }
        }
    }
    const std::int64_t enc_channels = encoder_norm_channels(config);
    r.encoder_norm_per_set = 2 * enc_channels;
    r.encoder_norm_sets = config.sharing == Sharing::kSharedNorms ? 1 : config.modalities;
    r.decoder_norm = 2LL * config.decoder_width * steps;
    r.ensemble = config.ensemble ? config.modalities : 0;
    r.total = r.conv + r.fusion + r.encoder_norm_per_set * r.encoder_norm_sets + r.decoder_norm + r.ensemble;
    r.buffers = 2 * (enc_channels * r.encoder_norm_sets + static_cast<std::int64_t>(config.decoder_width) * steps);
    if (config.modalities == 1) {
        r.unimodal_total = r.total;
    } else {
        NetConfig uni = config;
        uni.modalities = 1;
        uni.direction = Direction::kBidirectional;
        r.unimodal_total = count_params(uni).total;
    }
    r.overhead = static_cast<double>(r.total - r.unimodal_total) / static_cast<double>(r.unimodal_total);
    return r;
}

NetConfig resnet101_shape(int modalities) {
    NetConfig c;
    c.modalities = modalities;
    c.in_channels = 3;
    c.classes = 40;
    c.stem_width = 64;
    c.stages = {{3, 256, 64}, {4, 512, 128}, {23, 1024, 256}, {3, 2048, 512}};
    c.decoder_width = 256;
    c.ensemble = false;
    return c;
}

void ActivationTrace::record(const std::string& site, const Graph& g, std::span<const Var> branches) {
    sites.push_back(site);
    std::vector<Tensor> row;
    row.reserve(branches.size());
    for (Var v : branches) row.push_back(g.value(v));
    values.push_back(std::move(row));
}

const std::vector<Tensor>& ActivationTrace::at(const std::string& site) const {
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (sites[i] == site) return values[i];
    }
    throw std::out_of_range("no trace site '" + site + "'");
}

namespace {

Tensor he_normal(Shape shape, Lcg64& rng) {
    const double fan_in = static_cast<double>(shape.c) * shape.h * shape.w;
    return random_normal(shape, rng, std::sqrt(2.0 / fan_in));
}

/// Convolution whose weight is either shared by all branches or copied per branch.
struct Conv {
    std::vector<Parameter> weights;
    int stride = 1;
    int pad = 0;

    Conv(const std::string& name, int cin, int cout, int k, int stride_, int copies, Lcg64& rng)
        : stride(stride_), pad((k - 1) / 2) {
        weights.reserve(copies);
        for (int i = 0; i < copies; ++i) {
            const std::string n = copies == 1 ? name + ".weight" : name + ".weight.m" + std::to_string(i);
            weights.emplace_back(n, he_normal(Shape{cout, cin, k, k}, rng), ParamKind::kConvWeight);
        }
    }

    Var apply(Graph& g, Var x, int branch) {
        Parameter& w = weights.size() == 1 ? weights[0] : weights.at(branch);
        return conv2d(g, x, g.param(w), std::nullopt, stride, pad);
    }
};

struct Block {
    FusionBlockConfig cfg;
    std::string name;
    bool site = false;
    Conv conv1;
    ModalityNorm bn1;
    Conv conv2;
    ModalityNorm bn2;
    Conv conv3;
    ModalityNorm bn3;
    std::optional<Conv> proj;
    std::optional<ModalityNorm> proj_bn;
    // concat: {w}; attention: {w1, b1, w2, b2}
    std::vector<Parameter> fuse;

    Block(const NetConfig& nc, int stage, int block, int copies, NormMode mode, Lcg64& rng, Lcg64& fuse_rng)
        : cfg(nc.block_config(stage, block)),
          name("enc.stage" + std::to_string(stage + 1) + ".block" + std::to_string(block + 1)),
          site(nc.is_fusion_site(stage, block)),
          conv1(name + ".conv1", cfg.in, cfg.mid, 1, cfg.stride, copies, rng),
          bn1(name + ".bn1", cfg.mid, nc.modalities, mode, nc.norm),
          conv2(name + ".conv2", cfg.mid, cfg.mid, 3, 1, copies, rng),
          bn2(name + ".bn2", cfg.mid, nc.modalities, mode, nc.norm),
          conv3(name + ".conv3", cfg.mid, cfg.out, 1, 1, copies, rng),
          bn3(name + ".bn3", cfg.out, nc.modalities, mode, nc.norm) {
        if (block == 0) {
            proj.emplace(name + ".proj", cfg.in, cfg.out, 1, cfg.stride, copies, rng);
            proj_bn.emplace(name + ".proj_bn", cfg.out, nc.modalities, mode, nc.norm);
        }
        if (!site || !output_fusion(nc.fusion) || effective_direction(nc) == Direction::kNone) return;
        const int c = cfg.out;
        if (nc.fusion == FusionMethod::kConcat) {
            // starts as the plain average of the two halves
            Tensor w(Shape{c, 2 * c, 1, 1});
            for (int o = 0; o < c; ++o) {
                w.at(o, o, 0, 0) = 0.5;
                w.at(o, c + o, 0, 0) = 0.5;
            }
            fuse.emplace_back(name + ".fuse.weight", std::move(w), ParamKind::kConvWeight);
        } else if (nc.fusion == FusionMethod::kAttention) {
            const int h = attention_width(nc, c);
            fuse.reserve(4);
            fuse.emplace_back(name + ".fuse.w1", he_normal(Shape{h, 2 * c, 1, 1}, fuse_rng), ParamKind::kConvWeight);
            fuse.emplace_back(name + ".fuse.b1", Tensor(Shape{1, h, 1, 1}), ParamKind::kConvBias);
            fuse.emplace_back(name + ".fuse.w2", random_normal(Shape{2 * c, h, 1, 1}, fuse_rng, 0.01),
                              ParamKind::kConvWeight);
            fuse.emplace_back(name + ".fuse.b2", Tensor(Shape{1, 2 * c, 1, 1}), ParamKind::kConvBias);
        }
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        auto add_conv = [&](Conv& c) {
            for (Parameter& p : c.weights) out.push_back(&p);
        };
        auto add_norm = [&](ModalityNorm& n) {
            for (Parameter* p : n.parameters()) out.push_back(p);
        };
        add_conv(conv1);
        add_norm(bn1);
        add_conv(conv2);
        add_norm(bn2);
        add_conv(conv3);
        add_norm(bn3);
        if (proj) {
            add_conv(*proj);
            add_norm(*proj_bn);
        }
        for (Parameter& p : fuse) out.push_back(&p);
        return out;
    }

    std::vector<std::pair<std::string, Tensor*>> buffers() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (ModalityNorm* n : {&bn1, &bn2, &bn3}) {
            for (auto& b : n->buffers()) out.push_back(b);
        }
        if (proj_bn) {
            for (auto& b : proj_bn->buffers()) out.push_back(b);
        }
        return out;
    }
};

bool receives(Direction d, int branch) {
    switch (d) {
        case Direction::kBidirectional: return true;
        case Direction::kOneToTwo: return branch == 1;
        case Direction::kTwoToOne: return branch == 0;
        case Direction::kNone: return false;
    }
    return false;
}

}  // namespace

struct AsymFusionNet::Impl {
    NetConfig config;
    Conv stem;
    ModalityNorm stem_bn;
    std::vector<Block> blocks;
    std::vector<std::pair<int, int>> block_pos;  // (stage, block)
    std::vector<Conv> dec_convs;
    std::vector<ModalityNorm> dec_bns;
    Parameter cls_weight;
    Parameter cls_bias;
    std::optional<Parameter> ens_logits;

    static int copies(const NetConfig& c) { return c.sharing == Sharing::kIndividual ? c.modalities : 1; }
    static NormMode enc_mode(const NetConfig& c) {
        return c.sharing == Sharing::kSharedNorms ? NormMode::kShared : NormMode::kPrivate;
    }

    Impl(NetConfig cfg, Lcg64& rng, Lcg64& fuse_rng)
        : config((cfg.validate(), std::move(cfg))),
          stem("enc.stem.conv", config.in_channels, config.stem_width, 1, 1, copies(config), rng),
          stem_bn("enc.stem.bn", config.stem_width, config.modalities, enc_mode(config), config.norm),
          cls_weight("dec.cls.weight", Tensor(Shape{config.classes, config.decoder_width, 1, 1}),
                     ParamKind::kConvWeight),
          cls_bias("dec.cls.bias", Tensor(Shape{1, config.classes, 1, 1}), ParamKind::kConvBias) {
        int total_blocks = 0;
        for (const StageSpec& st : config.stages) total_blocks += st.blocks;
        blocks.reserve(total_blocks);
        for (std::size_t s = 0; s < config.stages.size(); ++s) {
            for (int b = 0; b < config.stages[s].blocks; ++b) {
                blocks.emplace_back(config, static_cast<int>(s), b, copies(config), enc_mode(config), rng, fuse_rng);
                block_pos.emplace_back(static_cast<int>(s), b);
            }
        }
        const int steps = static_cast<int>(config.stages.size()) - 1;
        dec_convs.reserve(steps);
        dec_bns.reserve(steps);
        int cin = config.stages.back().width;
        for (int i = 0; i < steps; ++i) {
            const std::string name = "dec.step" + std::to_string(i + 1);
            dec_convs.emplace_back(name + ".conv", cin, config.decoder_width, 3, 1, 1, rng);
            dec_bns.emplace_back(name + ".bn", config.decoder_width, config.modalities, NormMode::kShared,
                                 config.norm);
            cin = config.decoder_width;
        }
        cls_weight.value = he_normal(cls_weight.value.shape(), rng);
        if (config.ensemble) {
            ens_logits.emplace("ens.logits", Tensor(Shape{1, config.modalities, 1, 1}), ParamKind::kEnsembleLogit);
        }
    }

    std::vector<Var> run_block(Graph& g, Block& blk, const std::vector<Var>& xs, bool train,
                               ActivationTrace* trace) {
        const int S = static_cast<int>(xs.size());
        const FusionBlockConfig& c = blk.cfg;
        const Direction dir = c.fuses() ? c.direction : Direction::kNone;
        auto donor = [S](int s) { return (s + 1) % S; };
        // branch s is read by some receiver
        auto donated = [&](int s) {
            for (int r = 0; r < S; ++r) {
                if (receives(dir, r) && donor(r) == s) return true;
            }
            return false;
        };

        std::vector<Var> h(S);
        for (int s = 0; s < S; ++s) h[s] = relu(g, blk.bn1.forward(g, blk.conv1.apply(g, xs[s], s), s, train));
        const int split = c.shuffle ? c.shuffle_config.resolve(c.mid) : 0;
        auto exchange = [&](std::vector<Var>& v) {
            if (!c.shuffle || dir == Direction::kNone) return;
            std::vector<Var> mixed = v;
            for (int s = 0; s < S; ++s) {
                if (receives(dir, s)) mixed[s] = shuffle_mix(g, v[s], v[donor(s)], split);
            }
            v = std::move(mixed);
        };
        exchange(h);
        if (trace != nullptr) trace->record(blk.name + ".h", g, h);

        std::vector<std::optional<Var>> give(S);
        if (dir != Direction::kNone && (c.shift || c.cross_skip_only)) {
            for (int s = 0; s < S; ++s) {
                if (!donated(s)) continue;
                give[s] = c.cross_skip_only ? h[s] : pixel_shift(g, h[s], c.shift_spec);
            }
        }

        std::vector<Var> gg(S);
        for (int s = 0; s < S; ++s) {
            gg[s] = relu(g, blk.bn2.forward(g, blk.conv2.apply(g, h[s], s), s, train));
        }
        for (int s = 0; s < S; ++s) {
            if (receives(dir, s) && give[donor(s)]) gg[s] = add(g, gg[s], *give[donor(s)]);
        }
        exchange(gg);
        if (trace != nullptr) trace->record(blk.name + ".g", g, gg);

        std::vector<Var> out(S);
        for (int s = 0; s < S; ++s) {
            Var main = blk.bn3.forward(g, blk.conv3.apply(g, gg[s], s), s, train);
            Var skip = blk.proj ? blk.proj_bn->forward(g, blk.proj->apply(g, xs[s], s), s, train) : xs[s];
            out[s] = relu(g, add(g, main, skip));
        }

        const Direction out_dir = effective_direction(config);
        if (blk.site && output_fusion(config.fusion) && out_dir != Direction::kNone) {
            std::vector<Var> fused = out;
            for (int s = 0; s < S; ++s) {
                if (!receives(out_dir, s)) continue;
                Var own = out[s];
                Var other = out[donor(s)];
                switch (config.fusion) {
                    case FusionMethod::kAverage: fused[s] = scale(g, add(g, own, other), 0.5); break;
                    case FusionMethod::kConcat:
                        fused[s] = conv2d(g, channel_concat(g, own, other), g.param(blk.fuse[0]), std::nullopt, 1, 0);
                        break;
                    case FusionMethod::kAttention:
                        fused[s] = attention_fuse(g, own, other, g.param(blk.fuse[0]), g.param(blk.fuse[1]),
                                                  g.param(blk.fuse[2]), g.param(blk.fuse[3]));
                        break;
                    default: break;
                }
            }
            out = std::move(fused);
        }
        if (trace != nullptr) trace->record(blk.name + ".out", g, out);
        return out;
    }
};

AsymFusionNet::AsymFusionNet(NetConfig config, std::uint64_t seed) {
    // fusion-site weights use their own stream so the remaining weights do
    // not depend on the fusion method
    Lcg64 rng(seed);
    Lcg64 fuse_rng(splitmix64(seed ^ 0xf05eull));
    impl_ = std::make_unique<Impl>(std::move(config), rng, fuse_rng);
}

AsymFusionNet::AsymFusionNet(AsymFusionNet&&) noexcept = default;
AsymFusionNet& AsymFusionNet::operator=(AsymFusionNet&&) noexcept = default;
AsymFusionNet::~AsymFusionNet() = default;

const NetConfig& AsymFusionNet::config() const { return impl_->config; }

Tensor AsymFusionNet::alpha() const {
    const int S = impl_->config.modalities;
    if (impl_->ens_logits) return softmax_weights(impl_->ens_logits->value);
    return Tensor(Shape{1, S, 1, 1}, 1.0 / S);
}

NetOutput AsymFusionNet::forward(Graph& g, std::span<const Tensor> inputs, bool train, ActivationTrace* trace) {
    Impl& m = *impl_;
    const NetConfig& c = m.config;
    const int S = c.modalities;
    if (static_cast<int>(inputs.size()) != S) {
        throw std::invalid_argument("forward: expected " + std::to_string(S) + " modality inputs, got " +
                                    std::to_string(inputs.size()));
    }
    const Shape s0 = inputs[0].shape();
    if (s0.c != c.in_channels) {
        throw DimensionError("C", "forward: input has " + std::to_string(s0.c) + " channels, expected " +
                                      std::to_string(c.in_channels));
    }
    const int mult = c.spatial_multiple();
    if (s0.h % mult != 0 || s0.w % mult != 0) {
        throw DimensionError(s0.h % mult != 0 ? "H" : "W",
                             "forward: input " + s0.str() + " is not a multiple of " + std::to_string(mult));
    }
    for (const Tensor& t : inputs) {
        if (t.shape() != s0) throw DimensionError("shape", "forward: modality inputs differ: " + t.shape().str());
    }

    std::vector<Var> xs(S);
    for (int s = 0; s < S; ++s) {
        xs[s] = relu(g, m.stem_bn.forward(g, m.stem.apply(g, g.constant(inputs[s]), s), s, train));
    }
    if (trace != nullptr) trace->record("enc.stem", g, xs);
    for (Block& blk : m.blocks) xs = m.run_block(g, blk, xs, train, trace);

    NetOutput out;
    for (int s = 0; s < S; ++s) {
        Var y = xs[s];
        for (std::size_t i = 0; i < m.dec_convs.size(); ++i) {
            y = upsample_nearest2x(g, y);
            y = relu(g, m.dec_bns[i].forward(g, m.dec_convs[i].apply(g, y, s), s, train));
        }
        y = conv2d(g, y, g.param(m.cls_weight), g.param(m.cls_bias), 1, 0);
        out.logits.push_back(y);
        out.probs.push_back(ops::softmax_channels(g.value(y)));
    }
    if (trace != nullptr) trace->record("logits", g, out.logits);
    out.alpha = alpha();
    out.ensemble = mix_probs(out.alpha, out.probs);
    return out;
}

Tensor AsymFusionNet::predict(std::span<const Tensor> inputs) {
    Graph g;
    return forward(g, inputs, false).ensemble;
}

std::vector<Parameter*> AsymFusionNet::parameters() {
    Impl& m = *impl_;
    std::vector<Parameter*> out;
    for (Parameter& p : m.stem.weights) out.push_back(&p);
    for (Parameter* p : m.stem_bn.parameters()) out.push_back(p);
    for (Block& b : m.blocks) {
        for (Parameter* p : b.parameters()) out.push_back(p);
    }
    for (std::size_t i = 0; i < m.dec_convs.size(); ++i) {
        for (Parameter& p : m.dec_convs[i].weights) out.push_back(&p);
        for (Parameter* p : m.dec_bns[i].parameters()) out.push_back(p);
    }
    out.push_back(&m.cls_weight);
    out.push_back(&m.cls_bias);
    if (m.ens_logits) out.push_back(&*m.ens_logits);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> AsymFusionNet::buffers() {
    Impl& m = *impl_;
    std::vector<std::pair<std::string, Tensor*>> out = m.stem_bn.buffers();
    for (Block& b : m.blocks) {
        for (auto& e : b.buffers()) out.push_back(e);
    }
    for (ModalityNorm& n : m.dec_bns) {
        for (auto& e : n.buffers()) out.push_back(e);
    }
    return out;
}

Parameter* AsymFusionNet::find_parameter(const std::string& name) {
    for (Parameter* p : parameters()) {
        if (p->name == name) return p;
    }
    return nullptr;
}

void AsymFusionNet::zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
}

ParamReport count_params(AsymFusionNet& net) {
    ParamReport r;
    std::int64_t enc_norm = 0;
    std::set<std::string> sets;
    for (Parameter* p : net.parameters()) {
        const auto n = static_cast<std::int64_t>(p->value.size());
        const bool is_fusion = p->name.find(".fuse.") != std::string::npos;
        switch (p->kind) {
            case ParamKind::kConvWeight:
            case ParamKind::kConvBias: (is_fusion ? r.fusion : r.conv) += n; break;
            case ParamKind::kNormScale:
            case ParamKind::kNormShift:
                if (p->name.rfind("enc.", 0) == 0) {
                    enc_norm += n;
                    const auto pos = p->name.rfind(".m");
                    sets.insert(pos != std::string::npos && p->name.find('.', pos + 1) == std::string::npos
                                    ? p->name.substr(pos)
                                    : std::string());
                } else {
                    r.decoder_norm += n;
                }
                break;
            case ParamKind::kEnsembleLogit: r.ensemble += n; break;
        }
    }
    r.encoder_norm_sets = static_cast<int>(sets.size());
    r.encoder_norm_per_set = r.encoder_norm_sets == 0 ? 0 : enc_norm / r.encoder_norm_sets;
    r.total = r.conv + r.fusion + enc_norm + r.decoder_norm + r.ensemble;
    for (auto& [name, t] : net.buffers()) r.buffers += static_cast<std::int64_t>(t->size());

    if (net.config().modalities == 1) {
        r.unimodal_total = r.total;
    } else {
        NetConfig uni = net.config();
        uni.modalities = 1;
        uni.direction = Direction::kBidirectional;
        AsymFusionNet single(uni, 0);
        std::int64_t total = 0;
        for (Parameter* p : single.parameters()) total += static_cast<std::int64_t>(p->value.size());
        r.unimodal_total = total;
    }
    r.overhead = static_cast<double>(r.total - r.unimodal_total) / static_cast<double>(r.unimodal_total);
    return r;
}

}  // namespace asymfusion
