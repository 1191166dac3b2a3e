#pragma once

#include <iosfwd>
#include <string>

#include "mammil/metrics.hpp"
#include "mammil/snapshot.hpp"

namespace mammil {

enum class TrainScheme { default_scheme, dynamic, fixed_image };
TrainScheme parse_scheme(const std::string& s);
std::string to_string(TrainScheme s);

struct TrainConfig {
    OptimConfig optim;
    double beta = 1e-4;
    double pos_weight = 0.0;  // <= 0 means auto (#benign / #malignant)
    std::int64_t batch_size = 4;
    std::int64_t max_epochs = 30;
    std::int64_t patience = 10;
    TrainScheme scheme = TrainScheme::dynamic;
    std::uint64_t shuffle_seed = 0;
};

struct EpochLog {
    std::int64_t epoch = 0;
    double train_loss = 0.0, train_f1 = 0.0, train_auc = 0.0;
    double val_loss = 0.0, val_f1 = 0.0, val_auc = 0.0;
};

struct TrainResult {
    std::vector<Parameter> best_params;  // deep copy at the best validation AUC
    std::int64_t best_epoch = 0;
    double best_val_auc = 0.0, best_val_f1 = 0.0;
    std::vector<EpochLog> log;
};

// Early-stopped training on validation AUC; the model is left holding the
// best parameters. Run-log lines "epoch=<n> split=<train|val> loss=<f>
// f1=<f> auc=<f>" go to log_stream when given. Deterministic given the
// seeds: identical runs produce bit-identical checkpoints.
TrainResult train(CaseModel& model, const std::vector<CaseRecord>& train_split,
                  const std::vector<CaseRecord>& val_split, const TrainConfig& cfg,
                  std::ostream* log_stream = nullptr);

}  // namespace mammil
