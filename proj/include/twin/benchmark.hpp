#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/dataio.hpp"
#include "twin/network.hpp"

namespace twin {

enum class MaskMode { disjoint_partition, iid_random };

/// Partially observable sequential digit task: each image becomes L frames,
/// each revealing a `visible` fraction of the pixels (hidden pixels are 0).
struct MaskedSequenceTask {
    int frames = 5;
    double visible = 0.2;
    MaskMode mode = MaskMode::disjoint_partition;
    int pool = 2;  // average-pool factor applied before masking
    std::uint64_t seed = 0;

    void check() const;  // disjoint mode needs frames * visible >= 1
};

/// factor x factor average pooling of every image row (rows, cols must be
/// divisible by factor).
ImageSet preprocess_images(const ImageSet& set, int factor);

/// Class-stratified subset of n images, order shuffled.
ImageSet stratified_subset(const ImageSet& set, int n, std::uint64_t seed);

/// Zero a random (1 - visible) fraction of each image's pixels; the static
/// single-frame control for the memoryless baseline.
ImageSet mask_images(const ImageSet& set, double visible, std::uint64_t seed);

TaskData make_episodes(const ImageSet& set, const MaskedSequenceTask& task);

struct MlpBaselineResult {
    double accuracy = 0.0;
    std::size_t n_params = 0;
    std::vector<double> loss_curve;  // per epoch mean CE
};

/// Feedforward softmax classifier on (preprocessed) images; the
/// full-information comparison ceiling.
MlpBaselineResult mlp_baseline(const ImageSet& train, const ImageSet& test,
                               const std::vector<int>& hidden, int epochs,
                               int batch, double lr, std::uint64_t seed);

void write_task_jsonl(const std::string& path, const TaskData& data);
TaskData read_task_jsonl(const std::string& path);

}  // namespace twin
