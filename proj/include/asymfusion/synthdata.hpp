#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asymfusion/tensor.hpp"

namespace asymfusion {

/// Synthetic multimodal segmentation task. Labels are a Voronoi partition
/// of `regions` random seeds, each region labelled uniformly in 0..K-1.
/// Modality s shows class k at intensity (k+1)/K when k is visible in s and
/// at 0.5 otherwise, plus offsets[s] and Gaussian noise.
struct SynthConfig {
    int height = 32;
    int width = 32;
    int classes = 5;
    int modalities = 2;
    int regions = 12;
    double noise_sigma = 0.1;
    /// Bit s of visibility[k] is set when class k is visible in modality s.
    /// Empty selects the default split (see default_visibility).
    std::vector<std::uint32_t> visibility;
    /// Per-modality intensity offsets; empty means all zero.
    std::vector<double> offsets;
    int train_size = 512;
    int test_size = 128;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument.
    void validate() const;
    std::vector<std::uint32_t> resolved_visibility() const;
    double offset(int modality) const;
    /// Noise-free intensity of class k in modality s.
    double mean_intensity(int k, int s) const;
};

/// One modality: everything visible. Two: odd classes in modality 0, even
/// classes in modality 1. More: class k in modality k mod S.
std::vector<std::uint32_t> default_visibility(int classes, int modalities);

struct Sample {
    std::vector<Tensor> inputs;  // one 1 x 1 x H x W tensor per modality
    LabelMap label;              // 1 x H x W
};

struct Dataset {
    int height = 0;
    int width = 0;
    int classes = 0;
    int modalities = 0;
    std::vector<Sample> samples;

    bool operator==(const Dataset&) const;
};

enum class Split { kTrain, kTest };

/// Per-sample generator seed: seed ^ split salt ^ index. The salts differ
/// in the top bits, so train and test streams never share a seed.
std::uint64_t sample_seed(std::uint64_t seed, Split split, std::uint64_t index);

Sample generate_sample(const SynthConfig& cfg, std::uint64_t sample_seed);
Dataset generate_split(const SynthConfig& cfg, Split split);

struct SynthData {
    Dataset train;
    Dataset test;
};
SynthData generate(const SynthConfig& cfg);

/// Stacks the chosen samples into one N x 1 x H x W tensor per modality and
/// an N x H x W label map.
std::pair<std::vector<Tensor>, LabelMap> stack(const Dataset& data, std::span<const std::size_t> indices);

/// Raised when a dataset file is malformed.
class DatasetFormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kDatasetMagic[4] = {'A', 'F', 'S', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Writes the little-endian layout: magic, u32 version, H, W, K, S, count,
/// then f32 inputs [count][S][H][W], then u8 labels [count][H][W].
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct BayesCeiling {
    std::vector<double> unimodal;  // per modality
    double fused = 0.0;
};

/// Per-pixel Bayes-optimal pixel accuracy with a uniform class prior. Uses
/// grid integration of the Gaussian likelihoods; sigma = 0 is exact.
BayesCeiling bayes_ceiling(const SynthConfig& cfg);

struct MetricsReport {
    double pixel_accuracy = 0.0;
    double mean_accuracy = 0.0;
    double mean_iou = 0.0;
    /// Empty where the class is absent from the reference.
    std::vector<std::optional<double>> class_accuracy;
    /// Empty where the class is absent from both maps.
    std::vector<std::optional<double>> class_iou;
    std::vector<std::vector<std::int64_t>> confusion;  // [reference][prediction]
    std::int64_t pixels = 0;
};

/// Segmentation metrics from a confusion matrix. Throws std::out_of_range
/// for labels outside 0..K-1 and DimensionError for mismatched maps.
MetricsReport evaluate(std::span<const LabelMap> predictions, std::span<const LabelMap> references,
                       int classes);
MetricsReport evaluate(const LabelMap& prediction, const LabelMap& reference, int classes);

}  // namespace asymfusion
