#include "asymfusion/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "asymfusion/rng.hpp"

namespace asymfusion {

std::vector<std::uint32_t> default_visibility(int classes, int modalities) {
    std::vector<std::uint32_t> v(classes);
    for (int k = 0; k < classes; ++k) {
        if (modalities == 1) {
            v[k] = 1u;
        } else if (modalities == 2) {
            v[k] = (k % 2 == 1) ? 1u : 2u;
        } else {
            v[k] = 1u << (k % modalities);
        }
    }
    return v;
}

void SynthConfig::validate() const {
    if (height < 1 || width < 1) throw std::invalid_argument("image size must be positive");
    if (classes < 2 || classes > 255) throw std::invalid_argument("classes must lie in [2, 255]");
    if (modalities < 1 || modalities > 32) throw std::invalid_argument("modalities must lie in [1, 32]");
    if (regions < 1) throw std::invalid_argument("regions must be >= 1");
    if (regions > height * width) {
        throw std::invalid_argument("granularity " + std::to_string(regions) + " exceeds H*W = " +
                                    std::to_string(height * width));
    }
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    if (train_size < 0 || test_size < 0) throw std::invalid_argument("dataset sizes must be >= 0");
    if (!visibility.empty() && static_cast<int>(visibility.size()) != classes) {
        throw std::invalid_argument("visibility needs one entry per class");
    }
    const std::uint32_t all = modalities == 32 ? ~0u : ((1u << modalities) - 1u);
    for (std::uint32_t mask : resolved_visibility()) {
        if (mask == 0) throw std::invalid_argument("every class must be visible in at least one modality");
        if ((mask & ~all) != 0) throw std::invalid_argument("visibility names a modality that does not exist");
    }
    if (!offsets.empty() && static_cast<int>(offsets.size()) != modalities) {
        throw std::invalid_argument("offsets needs one entry per modality");
    }
}

std::vector<std::uint32_t> SynthConfig::resolved_visibility() const {
    return visibility.empty() ? default_visibility(classes, modalities) : visibility;
}

double SynthConfig::offset(int modality) const {
    return offsets.empty() ? 0.0 : offsets.at(modality);
}

double SynthConfig::mean_intensity(int k, int s) const {
    const bool visible = (resolved_visibility().at(k) >> s) & 1u;
    return (visible ? static_cast<double>(k + 1) / classes : 0.5) + offset(s);
}

bool Dataset::operator==(const Dataset& o) const {
    if (height != o.height || width != o.width || classes != o.classes || modalities != o.modalities ||
        samples.size() != o.samples.size()) {
        return false;
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i].inputs == o.samples[i].inputs) || !(samples[i].label == o.samples[i].label)) return false;
    }
    return true;
}

std::uint64_t sample_seed(std::uint64_t seed, Split split, std::uint64_t index) {
    const std::uint64_t salt = split == Split::kTrain ? 0x5a00000000000000ull : 0xa500000000000000ull;
    return seed ^ salt ^ index;
}

Sample generate_sample(const SynthConfig& cfg, std::uint64_t seed) {
    Lcg64 rng(seed);
    const int H = cfg.height;
    const int W = cfg.width;
    std::vector<double> sy(cfg.regions), sx(cfg.regions);
    std::vector<int> region_label(cfg.regions);
    for (int r = 0; r < cfg.regions; ++r) {
        sy[r] = rng.uniform(0.0, H);
        sx[r] = rng.uniform(0.0, W);
        region_label[r] = rng.uniform_int(cfg.classes);
    }
    Sample s;
    s.label = LabelMap(1, H, W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double py = y + 0.5;
            const double px = x + 0.5;
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int r = 0; r < cfg.regions; ++r) {
                const double d = (py - sy[r]) * (py - sy[r]) + (px - sx[r]) * (px - sx[r]);
                if (d < best_d) {
                    best_d = d;
                    best = r;
                }
            }
            s.label.at(0, y, x) = region_label[best];
        }
    }
    std::vector<std::vector<double>> means(cfg.classes, std::vector<double>(cfg.modalities));
    for (int k = 0; k < cfg.classes; ++k)
        for (int m = 0; m < cfg.modalities; ++m) means[k][m] = cfg.mean_intensity(k, m);
    for (int m = 0; m < cfg.modalities; ++m) {
        Tensor t(Shape{1, 1, H, W});
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double noise = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * rng.normal() : 0.0;
                t.at(0, 0, y, x) = means[s.label.at(0, y, x)][m] + noise;
            }
        }
        s.inputs.push_back(std::move(t));
    }
    return s;
}

Dataset generate_split(const SynthConfig& cfg, Split split) {
    cfg.validate();
    Dataset d;
    d.height = cfg.height;
    d.width = cfg.width;
    d.classes = cfg.classes;
    d.modalities = cfg.modalities;
    const int count = split == Split::kTrain ? cfg.train_size : cfg.test_size;
    d.samples.reserve(count);
    for (int i = 0; i < count; ++i) d.samples.push_back(generate_sample(cfg, sample_seed(cfg.seed, split, i)));
    return d;
}

SynthData generate(const SynthConfig& cfg) {
    return {generate_split(cfg, Split::kTrain), generate_split(cfg, Split::kTest)};
}

std::pair<std::vector<Tensor>, LabelMap> stack(const Dataset& data, std::span<const std::size_t> indices) {
    const int n = static_cast<int>(indices.size());
    const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
    std::vector<Tensor> inputs(data.modalities, Tensor(Shape{n, 1, data.height, data.width}));
    LabelMap labels(n, data.height, data.width);
    for (int i = 0; i < n; ++i) {
        const Sample& s = data.samples.at(indices[i]);
        for (int m = 0; m < data.modalities; ++m) {
            std::copy(s.inputs[m].data().begin(), s.inputs[m].data().end(), inputs[m].data().begin() + i * plane);
        }
        std::copy(s.label.data.begin(), s.label.data.end(), labels.data.begin() + i * plane);
    }
    return {std::move(inputs), std::move(labels)};
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* part = "header") {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DatasetFormatError(std::string("dataset: truncated ") + part);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kDatasetMagic, 4);
    for (std::uint32_t v : {kDatasetVersion, static_cast<std::uint32_t>(data.height),
                            static_cast<std::uint32_t>(data.width), static_cast<std::uint32_t>(data.classes),
                            static_cast<std::uint32_t>(data.modalities),
                            static_cast<std::uint32_t>(data.samples.size())}) {
        put_u32(os, v);
    }
    for (const Sample& s : data.samples) {
        for (const Tensor& t : s.inputs) {
            for (double v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    for (const Sample& s : data.samples) {
        for (int l : s.label.data) os.put(static_cast<char>(static_cast<unsigned char>(l)));
    }
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kDatasetMagic, 4) != 0) {
        throw DatasetFormatError("dataset: bad magic in " + path.string());
    }
    const std::uint32_t version = get_u32(is);
    if (version != kDatasetVersion) throw DatasetFormatError("dataset: unsupported version " + std::to_string(version));
    Dataset d;
    d.height = static_cast<int>(get_u32(is));
    d.width = static_cast<int>(get_u32(is));
    d.classes = static_cast<int>(get_u32(is));
    d.modalities = static_cast<int>(get_u32(is));
    const std::uint32_t count = get_u32(is);
    d.samples.resize(count);
    for (Sample& s : d.samples) {
        for (int m = 0; m < d.modalities; ++m) {
            Tensor t(Shape{1, 1, d.height, d.width});
            for (double& v : t.data()) v = std::bit_cast<float>(get_u32(is, "inputs"));
            s.inputs.push_back(std::move(t));
        }
    }
    for (Sample& s : d.samples) {
        s.label = LabelMap(1, d.height, d.width);
        for (int& l : s.label.data) {
            const int c = is.get();
            if (c == std::char_traits<char>::eof()) throw DatasetFormatError("dataset: truncated labels");
            if (c >= d.classes) throw DatasetFormatError("dataset: label " + std::to_string(c) + " out of range");
            l = c;
        }
    }
    return d;
}

namespace {

// Accuracy of the Bayes rule that observes the modalities in `dims`.
double ceiling_for(const SynthConfig& cfg, const std::vector<int>& dims) {
    const int K = cfg.classes;
    const int D = static_cast<int>(dims.size());
    std::set<std::vector<double>> distinct;
    for (int k = 0; k < K; ++k) {
        std::vector<double> m;
        for (int s : dims) m.push_back(cfg.mean_intensity(k, s));
        distinct.insert(m);
    }
    const std::vector<std::vector<double>> means(distinct.begin(), distinct.end());
    if (cfg.noise_sigma == 0.0) return static_cast<double>(means.size()) / K;

    // Equal priors per class, so only distinct mean vectors matter: each
    // contributes 1/K times the mass of its decision region. The midpoint
    // grid is refined within 8 sigma of every mean coordinate, so it stays
    // accurate however small sigma is.
    const double sigma = cfg.noise_sigma;
    const int J = static_cast<int>(means.size());
    const double budget = D == 1 ? 20000.0 : std::pow(4.0e6, 1.0 / D);
    std::vector<std::vector<double>> nodes(D), widths(D);
    std::vector<std::vector<double>> pdf(D);  // pdf[d][i * J + j]
    for (int d = 0; d < D; ++d) {
        std::set<double> centres;
        for (const auto& m : means) centres.insert(m[d]);
        const int per = std::max(16, static_cast<int>(budget / centres.size()));
        std::vector<double> cuts;
        for (double c : centres)
            for (int i = 0; i <= per; ++i) cuts.push_back(c + sigma * (-8.0 + 16.0 * i / per));
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            nodes[d].push_back(0.5 * (cuts[i] + cuts[i + 1]));
            widths[d].push_back(cuts[i + 1] - cuts[i]);
        }
        const std::size_t n = nodes[d].size();
        pdf[d].resize(n * J);
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < J; ++j) {
                const double z = (nodes[d][i] - means[j][d]) / sigma;
                pdf[d][i * J + j] = widths[d][i] * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
            }
        }
    }
    std::vector<int> idx(D, 0);
    double total = 0.0;
    while (true) {
        double best = 0.0;
        for (int j = 0; j < J; ++j) {
            double p = 1.0;
            for (int d = 0; d < D; ++d) p *= pdf[d][static_cast<std::size_t>(idx[d]) * J + j];
            best = std::max(best, p);
        }
        total += best;
        int d = 0;
        while (d < D && ++idx[d] == static_cast<int>(nodes[d].size())) idx[d++] = 0;
        if (d == D) break;
    }
    return total / K;
}

}  // namespace

BayesCeiling bayes_ceiling(const SynthConfig& cfg) {
    cfg.validate();
    BayesCeiling c;
    std::vector<int> all;
    for (int s = 0; s < cfg.modalities; ++s) {
        c.unimodal.push_back(ceiling_for(cfg, {s}));
        all.push_back(s);
    }
    c.fused = ceiling_for(cfg, all);
    return c;
}

MetricsReport evaluate(std::span<const LabelMap> predictions, std::span<const LabelMap> references, int classes) {
    if (predictions.size() != references.size()) {
        throw DimensionError("N", "evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                                      std::to_string(references.size()) + " references");
    }
    MetricsReport r;
    r.confusion.assign(classes, std::vector<std::int64_t>(classes, 0));
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const LabelMap& p = predictions[i];
        const LabelMap& t = references[i];
        if (p.n != t.n || p.h != t.h || p.w != t.w) throw DimensionError("shape", "evaluate: map shapes differ");
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            const int a = t.data[j];
            const int b = p.data[j];
            if (a < 0 || a >= classes || b < 0 || b >= classes) {
                throw std::out_of_range("evaluate: label outside [0, " + std::to_string(classes) + ")");
            }
            ++r.confusion[a][b];
        }
    }
    std::int64_t correct = 0;
    for (int k = 0; k < classes; ++k) {
        correct += r.confusion[k][k];
        for (int j = 0; j < classes; ++j) r.pixels += r.confusion[k][j];
    }
    r.pixel_accuracy = r.pixels == 0 ? 0.0 : static_cast<double>(correct) / r.pixels;
    double acc_sum = 0.0, iou_sum = 0.0;
    int acc_n = 0, iou_n = 0;
    for (int k = 0; k < classes; ++k) {
        std::int64_t ref = 0, pred = 0;
        for (int j = 0; j < classes; ++j) {
            ref += r.confusion[k][j];
            pred += r.confusion[j][k];
        }
        const std::int64_t tp = r.confusion[k][k];
        if (ref > 0) {
            r.class_accuracy.emplace_back(static_cast<double>(tp) / ref);
            acc_sum += *r.class_accuracy.back();
            ++acc_n;
        } else {
            r.class_accuracy.emplace_back();
        }
        const std::int64_t uni = ref + pred - tp;
        if (uni > 0) {
            r.class_iou.emplace_back(static_cast<double>(tp) / uni);
            iou_sum += *r.class_iou.back();
            ++iou_n;
        } else {
            r.class_iou.emplace_back();
        }
    }
    r.mean_accuracy = acc_n == 0 ? 0.0 : acc_sum / acc_n;
    r.mean_iou = iou_n == 0 ? 0.0 : iou_sum / iou_n;
    return r;
}

MetricsReport evaluate(const LabelMap& prediction, const LabelMap& reference, int classes) {
    return evaluate(std::span(&prediction, 1), std::span(&reference, 1), classes);
}

}  // namespace asymfusion
