#pragma once

#include <string>

#include "mammil/model.hpp"
#include "mammil/synthetic.hpp"
#include "mammil/trainer.hpp"

namespace mammil {

// Line-oriented run configuration: one "section.key = value" per line,
// '#' comments, UTF-8. Unknown keys are rejected. Every field has a default
// except the dataset.
struct RunConfig {
    // dataset: either manifest paths or a synthetic config
    std::string train_manifest, val_manifest, test_manifest;
    bool has_synthetic = false;
    SyntheticConfig synthetic;
    bool synthetic_seed_set = false;

    ModelConfig model;  // init_seed filled from seeds.init
    bool model_extents_set = false;

    TrainConfig training;
    double roi_match_threshold = 0.1;

    std::uint64_t seed_init = 1, seed_data = 2, seed_shuffle = 3;

    bool has_dataset() const { return has_synthetic || !train_manifest.empty(); }
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::string& path);
std::string format_run_config(const RunConfig& cfg);  // provenance echo

}  // namespace mammil
