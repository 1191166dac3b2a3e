#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mammil/model.hpp"

namespace mammil {

// F1 of the malignant class; 0 when there are no true positives.
double f1_score(const std::vector<int>& predicted, const std::vector<int>& truth);

// Rank-based AUC: mean over all (malignant, benign) pairs of
// [score_m > score_b], ties counted 0.5. Throws DataError when only one
// class is present.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

struct IouDsc {
    double iou = 0.0, dsc = 0.0;
};

// Pixel-count overlap of two half-open boxes.
IouDsc iou_dsc_boxes(const RoiBox& a, const RoiBox& b);

enum class IouMode { best_of_topk, mean_all_rois, top_attention };
std::string to_string(IouMode m);

// Per-image score; nullopt when the image has no groundtruth boxes.
std::optional<IouDsc> image_iou_dsc(const std::vector<PatchCandidate>& candidates,
                                    const std::vector<RoiBox>& groundtruth, IouMode mode);

// H = -sum a ln a, with 0 ln 0 := 0.
double attention_entropy(const std::vector<double>& weights);

// Everything the metrics need from one model pass over one case.
struct CaseEvaluation {
    const CaseRecord* record = nullptr;
    double final_prob = 0.0;
    std::vector<double> image_attention;                  // effective weights, sum to 1
    std::vector<double> image_probs;                      // IS paradigm only
    std::vector<std::vector<PatchCandidate>> candidates;  // per image
};

std::vector<CaseEvaluation> evaluate_cases(const CaseModel& model,
                                           const std::vector<CaseRecord>& cases);

enum class ProxySource { attention, probability };

// Predicted image labels for one case: attention > 0.25, or probability >
// 0.5 for the IS-only probability source.
std::vector<Label> proxy_image_labels(const CaseEvaluation& eval, ProxySource source);

// F1 of proxy labels vs true image labels pooled over all images of the
// truly malignant cases.
double proxy_label_f1(const std::vector<CaseEvaluation>& evals, ProxySource source);

struct GroupMetrics {
    int n = 0;
    std::optional<double> f1, auc;  // absent when the group has a single class
};

struct MetricsReport {
    int n_cases = 0;
    std::optional<double> f1, auc;
    std::vector<std::pair<std::string, GroupMetrics>> groups;  // stable order, ends with All
    std::map<IouMode, std::optional<IouDsc>> iou;              // absent without groundtruth
    std::optional<double> entropy_malignant, entropy_benign, entropy_uniform_baseline;
    std::optional<double> proxy_f1_attention, proxy_f1_probability;
    // rows {B-Case, M-Case} x columns {B+ROI, B+noROI, M+ROI, M+noROI}
    std::array<std::array<int, 4>, 2> confusion_with_roi{};
    bool has_roi_groundtruth = false;
    double roi_match_threshold = 0.1;
};

MetricsReport build_metrics_report(const std::vector<CaseEvaluation>& evals,
                                   double roi_match_threshold);

// UTF-8 "metric.path = value" lines in a stable order; the confusion table
// as a 2x4 integer block at the end.
std::string format_metrics_report(const MetricsReport& report);

}  // namespace mammil
