#pragma once

#include <array>
#include <cstdint>

#include "mammil/records.hpp"

namespace mammil {

// Planted-lesion generator. Benign lesions are low-contrast smooth blobs,
// malignant lesions high-contrast spiculated blobs; every lesion is recorded
// as a groundtruth RoiBox and every image gets a label, so localization and
// relevant-image metrics have full groundtruth to check against.
struct SyntheticConfig {
    std::int64_t n_cases = 200;
    std::int64_t image_height = 64;
    std::int64_t image_width = 48;
    double malignant_fraction = 0.3;
    // probabilities over case shapes, in order:
    //   0: 1L/1R  1: nL/mR  2: 1L+1R  3: 4-standard  4: 4-standard+extra
    std::array<double, 5> view_count_distribution{0.0, 0.0, 0.0, 1.0, 0.0};
    double lesion_contrast = 0.6;
    std::uint64_t seed = 0;
    // optional explicit split sizes; all zero means the default 70/10/20
    std::int64_t train_cases = 0, val_cases = 0, test_cases = 0;
};

struct SyntheticDataset {
    std::vector<CaseRecord> train, val, test;
};

void validate_config(const SyntheticConfig& cfg);

// Deterministic given cfg.seed. Splits are label-stratified (within one case
// per split) and a case never spans splits. Pixel values are quantized to
// 8-bit steps so a manifest round trip is bit-exact.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace mammil
