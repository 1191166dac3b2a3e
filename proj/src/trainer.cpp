#include "mammil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mammil/errors.hpp"

namespace mammil {

TrainScheme parse_scheme(const std::string& s) {
    if (s == "default") return TrainScheme::default_scheme;
    if (s == "dynamic") return TrainScheme::dynamic;
    if (s == "fixed-image") return TrainScheme::fixed_image;
    throw ConfigError("unknown training scheme '" + s + "' (default | dynamic | fixed-image)");
}

std::string to_string(TrainScheme s) {
    switch (s) {
        case TrainScheme::default_scheme: return "default";
        case TrainScheme::dynamic: return "dynamic";
        case TrainScheme::fixed_image: return "fixed-image";
    }
    return "?";
}

namespace {

void log_line(std::ostream* os, std::int64_t epoch, const char* split, double loss, double f1,
              double auc) {
    if (!os) return;
    (*os) << "epoch=" << epoch << " split=" << split << " loss=" << loss << " f1=" << f1
          << " auc=" << auc << "\n";
}

struct SplitEval {
    double loss = 0.0, f1 = 0.0, auc = 0.0;
};

SplitEval eval_split(CaseModel& model, const std::vector<CaseRecord>& cases,
                     const LossConfig& loss_cfg) {
    SplitEval ev;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& c : cases) {
        CaseOutput out = model.case_forward(c);
        ev.loss += case_loss(c.case_label, out.heads, out.saliency_maps, loss_cfg).item();
        scores.push_back(out.heads.final().item());
        labels.push_back(c.case_label == Label::malignant ? 1 : 0);
    }
    ev.loss /= static_cast<double>(cases.size());
    std::vector<int> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > 0.5 ? 1 : 0;
    ev.f1 = f1_score(pred, labels);
    ev.auc = auc_score(scores, labels);
    return ev;
}

}  // namespace

TrainResult train(CaseModel& model, const std::vector<CaseRecord>& train_split,
                  const std::vector<CaseRecord>& val_split, const TrainConfig& cfg,
                  std::ostream* log_stream) {
    std::vector<CaseRecord> filtered;
    const std::vector<CaseRecord>* train_cases = &train_split;
    if (cfg.scheme == TrainScheme::fixed_image) {
        for (const auto& c : train_split)
            if (case_group_of(c).four_std) filtered.push_back(c);
        train_cases = &filtered;
    }
    if (train_cases->empty()) throw DataError("train: empty training split");
    if (val_split.empty()) throw DataError("train: empty validation split");

    LossConfig loss_cfg;
    loss_cfg.beta = cfg.beta;
    loss_cfg.pos_weight = cfg.pos_weight > 0.0 ? cfg.pos_weight : auto_pos_weight(*train_cases);

    Optimizer optimizer(model.parameters(), cfg.optim);
    ComponentRegistry registry(model.parameters());
    SnapshotStore snapshots(registry, model.parameters(), optimizer);  // state at step 0

    TrainResult result;
    result.best_val_auc = -1.0;
    Rng shuffle_rng(cfg.shuffle_seed);

    for (std::int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng epoch_rng = shuffle_rng.fork(static_cast<std::uint64_t>(epoch));
        const auto batches =
            group_batches(*train_cases, static_cast<std::size_t>(cfg.batch_size), epoch_rng);

        double epoch_loss = 0.0;
        std::vector<double> train_scores;
        std::vector<int> train_labels;
        for (const auto& batch_idx : batches) {
            std::vector<const CaseRecord*> batch;
            batch.reserve(batch_idx.size());
            for (auto i : batch_idx) {
                batch.push_back(&(*train_cases)[i]);
                train_labels.push_back((*train_cases)[i].case_label == Label::malignant ? 1 : 0);
            }
            const double loss =
                cfg.scheme == TrainScheme::dynamic
                    ? dynamic_step(model, optimizer, loss_cfg, batch, snapshots, &train_scores)
                    : default_step(model, optimizer, loss_cfg, batch, &train_scores);
            epoch_loss += loss * static_cast<double>(batch.size());
        }
        epoch_loss /= static_cast<double>(train_cases->size());

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_loss;
        {
            std::vector<int> pred(train_scores.size());
            for (std::size_t i = 0; i < train_scores.size(); ++i)
                pred[i] = train_scores[i] > 0.5 ? 1 : 0;
            entry.train_f1 = f1_score(pred, train_labels);
            entry.train_auc = auc_score(train_scores, train_labels);
        }
        const SplitEval val = eval_split(model, val_split, loss_cfg);
        entry.val_loss = val.loss;
        entry.val_f1 = val.f1;
        entry.val_auc = val.auc;
        result.log.push_back(entry);
        log_line(log_stream, epoch, "train", entry.train_loss, entry.train_f1, entry.train_auc);
        log_line(log_stream, epoch, "val", entry.val_loss, entry.val_f1, entry.val_auc);

        if (val.auc > result.best_val_auc) {
            result.best_val_auc = val.auc;
            result.best_val_f1 = val.f1;
            result.best_epoch = epoch;
            result.best_params.clear();
            for (const auto& p : model.parameters())
                result.best_params.push_back(Parameter{p.name, p.component, p.tensor.clone()});
        } else if (epoch - result.best_epoch > cfg.patience) {
            break;
        }
    }
    model.load_parameters(result.best_params);
    return result;
}

}  // namespace mammil
