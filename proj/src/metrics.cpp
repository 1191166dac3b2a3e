#include "mammil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mammil/errors.hpp"

namespace mammil {

double f1_score(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw DataError("f1: prediction/label length mismatch or empty input");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == 1 && truth[i] == 1) ++tp;
        if (predicted[i] == 1 && truth[i] == 0) ++fp;
        if (predicted[i] == 0 && truth[i] == 1) ++fn;
    }
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("auc: score/label length mismatch or empty input");
    std::int64_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw DataError("AUC undefined: single-class input");
    // rank-sum form, O(n log n), ties share the mean rank
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mean_rank;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k)
        if (labels[k] == 1) rank_sum += rank[k];
    const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

IouDsc iou_dsc_boxes(const RoiBox& a, const RoiBox& b) {
    const std::int64_t ix = std::max<std::int64_t>(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const std::int64_t iy = std::max<std::int64_t>(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const std::int64_t inter = ix * iy;
    const std::int64_t uni = a.area() + b.area() - inter;
    IouDsc out;
    out.iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    const std::int64_t total = a.area() + b.area();
    out.dsc = total > 0 ? 2.0 * static_cast<double>(inter) / static_cast<double>(total) : 0.0;
    return out;
}

std::string to_string(IouMode m) {
    switch (m) {
        case IouMode::best_of_topk: return "best_of_topk";
        case IouMode::mean_all_rois: return "mean_all_rois";
        case IouMode::top_attention: return "top_attention";
    }
    return "?";
}

namespace {

IouDsc best_match(const RoiBox& gt, const std::vector<const RoiBox*>& candidates) {
    IouDsc best;
    for (const RoiBox* c : candidates) {
        const IouDsc d = iou_dsc_boxes(*c, gt);
        if (d.iou > best.iou) best = d;
    }
    return best;
}

}  // namespace

std::optional<IouDsc> image_iou_dsc(const std::vector<PatchCandidate>& candidates,
                                    const std::vector<RoiBox>& groundtruth, IouMode mode) {
    if (groundtruth.empty()) return std::nullopt;
    std::vector<const RoiBox*> boxes;
    if (mode == IouMode::top_attention) {
        // only the candidate carrying the highest patch attention (first on ties)
        std::size_t best = 0;
        for (std::size_t j = 1; j < candidates.size(); ++j)
            if (candidates[j].attention > candidates[best].attention) best = j;
        if (!candidates.empty()) boxes.push_back(&candidates[best].box);
    } else {
        for (const auto& c : candidates) boxes.push_back(&c.box);
    }
    if (boxes.empty()) return IouDsc{};
    if (mode == IouMode::mean_all_rois) {
        IouDsc acc;
        for (const auto& gt : groundtruth) {
            const IouDsc d = best_match(gt, boxes);
            acc.iou += d.iou;
            acc.dsc += d.dsc;
        }
        acc.iou /= static_cast<double>(groundtruth.size());
        acc.dsc /= static_cast<double>(groundtruth.size());
        return acc;
    }
    IouDsc best;
    for (const auto& gt : groundtruth) {
        const IouDsc d = best_match(gt, boxes);
        if (d.iou > best.iou || (d.iou == best.iou && d.dsc > best.dsc)) best = d;
    }
    return best;
}

double attention_entropy(const std::vector<double>& weights) {
    double h = 0.0;
    for (double a : weights)
        if (a > 0.0) h -= a * std::log(a);
    return h;
}

std::vector<CaseEvaluation> evaluate_cases(const CaseModel& model,
                                           const std::vector<CaseRecord>& cases) {
    std::vector<CaseEvaluation> evals;
    evals.reserve(cases.size());
    for (const auto& c : cases) {
        CaseOutput out = model.case_forward(c);
        CaseEvaluation ev;
        ev.record = &c;
        ev.final_prob = out.heads.final().item();
        ev.image_attention = out.image_attention;
        ev.image_probs = out.image_probs;
        for (auto& b : out.bundles) ev.candidates.push_back(std::move(b.patches));
        evals.push_back(std::move(ev));
    }
    return evals;
}

std::vector<Label> proxy_image_labels(const CaseEvaluation& eval, ProxySource source) {
    const std::size_t m = eval.record->images.size();
    std::vector<Label> out(m, Label::benign);
    if (source == ProxySource::attention) {
        // attentions already sum to 1 per case; renormalize defensively
        double total = 0.0;
        for (double a : eval.image_attention) total += a;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = total > 0.0 ? eval.image_attention[i] / total : 0.0;
            out[i] = a > 0.25 ? Label::malignant : Label::benign;
        }
    } else {
        if (eval.image_probs.size() != m)
            throw DataError("proxy labels: image probabilities unavailable (ES paradigm)");
        for (std::size_t i = 0; i < m; ++i)
            out[i] = eval.image_probs[i] > 0.5 ? Label::malignant : Label::benign;
    }
    return out;
}

double proxy_label_f1(const std::vector<CaseEvaluation>& evals, ProxySource source) {
    std::vector<int> pred, truth;
    for (const auto& ev : evals) {
        if (ev.record->case_label != Label::malignant) continue;
        const auto labels = proxy_image_labels(ev, source);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!ev.record->images[i].image_label)
                throw DataError("proxy labels: true image labels unavailable for case " +
                                ev.record->case_id);
            pred.push_back(labels[i] == Label::malignant ? 1 : 0);
            truth.push_back(*ev.record->images[i].image_label == Label::malignant ? 1 : 0);
        }
    }
    if (pred.empty()) throw DataError("proxy labels: no truly malignant cases to evaluate");
    return f1_score(pred, truth);
}

namespace {

GroupMetrics metrics_of(const std::vector<double>& scores, const std::vector<int>& labels) {
    GroupMetrics g;
    g.n = static_cast<int>(scores.size());
    if (scores.empty()) return g;
    std::vector<int> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > 0.5 ? 1 : 0;
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                      std::count(labels.begin(), labels.end(), 0) > 0;
    if (both) {
        g.f1 = f1_score(pred, labels);
        g.auc = auc_score(scores, labels);
    }
    return g;
}

bool in_group(const CaseGroup& g, const std::string& key) {
    if (key == "All") return true;
    if (key == "std") return g.std_views;
    if (key == "4-std") return g.four_std;
    if (key == "mix") return g.mixed;
    return to_string(g.base) == key;
}

}  // namespace

MetricsReport build_metrics_report(const std::vector<CaseEvaluation>& evals,
                                   double roi_match_threshold) {
    if (evals.empty()) throw DataError("metrics: no cases evaluated");
    MetricsReport rep;
    rep.n_cases = static_cast<int>(evals.size());
    rep.roi_match_threshold = roi_match_threshold;

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& ev : evals) {
        scores.push_back(ev.final_prob);
        labels.push_back(ev.record->case_label == Label::malignant ? 1 : 0);
    }
    const GroupMetrics overall = metrics_of(scores, labels);
    rep.f1 = overall.f1;
    rep.auc = overall.auc;

    const char* group_keys[] = {"1L/1R", "nL/mR", "1L+1R", "nL+mR", "std", "4-std", "mix", "All"};
    for (const char* key : group_keys) {
        std::vector<double> gs;
        std::vector<int> gl;
        for (std::size_t i = 0; i < evals.size(); ++i) {
            if (!in_group(case_group_of(*evals[i].record), key)) continue;
            gs.push_back(scores[i]);
            gl.push_back(labels[i]);
        }
        rep.groups.emplace_back(key, metrics_of(gs, gl));
    }

    // localization over images with groundtruth
    for (const auto& ev : evals)
        for (const auto& img : ev.record->images)
            rep.has_roi_groundtruth = rep.has_roi_groundtruth || !img.roi_boxes.empty();
    for (IouMode mode : {IouMode::best_of_topk, IouMode::mean_all_rois, IouMode::top_attention}) {
        if (!rep.has_roi_groundtruth) {
            rep.iou[mode] = std::nullopt;
            continue;
        }
        IouDsc acc;
        int n = 0;
        for (const auto& ev : evals) {
            for (std::size_t i = 0; i < ev.record->images.size(); ++i) {
                const auto d = image_iou_dsc(ev.candidates[i], ev.record->images[i].roi_boxes, mode);
                if (!d) continue;
                acc.iou += d->iou;
                acc.dsc += d->dsc;
                ++n;
            }
        }
        if (n > 0) {
            acc.iou /= n;
            acc.dsc /= n;
        }
        rep.iou[mode] = acc;
    }

    // attention entropy summaries plus the uniform ln(M) baseline
    double ent_mal = 0.0, ent_ben = 0.0, baseline = 0.0;
    int n_mal = 0, n_ben = 0;
    for (const auto& ev : evals) {
        const double h = attention_entropy(ev.image_attention);
        baseline += std::log(static_cast<double>(ev.record->images.size()));
        if (ev.record->case_label == Label::malignant) {
            ent_mal += h;
            ++n_mal;
        } else {
            ent_ben += h;
            ++n_ben;
        }
    }
    if (n_mal > 0) rep.entropy_malignant = ent_mal / n_mal;
    if (n_ben > 0) rep.entropy_benign = ent_ben / n_ben;
    rep.entropy_uniform_baseline = baseline / static_cast<double>(evals.size());

    // proxy image labels need true image labels and malignant cases
    bool have_image_labels = true;
    for (const auto& ev : evals)
        for (const auto& img : ev.record->images) have_image_labels &= img.image_label.has_value();
    const bool have_malignant = std::count(labels.begin(), labels.end(), 1) > 0;
    if (have_image_labels && have_malignant) {
        rep.proxy_f1_attention = proxy_label_f1(evals, ProxySource::attention);
        if (!evals.front().image_probs.empty())
            rep.proxy_f1_probability = proxy_label_f1(evals, ProxySource::probability);
    }

    // confusion with ROI extraction check
    for (const auto& ev : evals) {
        bool roi_found = false;
        for (std::size_t i = 0; i < ev.record->images.size() && !roi_found; ++i)
            for (const auto& cand : ev.candidates[i]) {
                for (const auto& gt : ev.record->images[i].roi_boxes)
                    if (iou_dsc_boxes(cand.box, gt).iou >= roi_match_threshold) {
                        roi_found = true;
                        break;
                    }
                if (roi_found) break;
            }
        const int row = ev.record->case_label == Label::malignant ? 1 : 0;
        const bool pred_malignant = ev.final_prob > 0.5;
        const int col = (pred_malignant ? 2 : 0) + (roi_found ? 0 : 1);
        rep.confusion_with_roi[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)]++;
    }
    return rep;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

}  // namespace

std::string format_metrics_report(const MetricsReport& rep) {
    std::ostringstream os;
    os << "cases = " << rep.n_cases << "\n";
    os << "f1 = " << opt(rep.f1) << "\n";
    os << "auc = " << opt(rep.auc) << "\n";
    for (const auto& [key, g] : rep.groups) {
        os << "group." << key << ".n = " << g.n << "\n";
        os << "group." << key << ".f1 = " << opt(g.f1) << "\n";
        os << "group." << key << ".auc = " << opt(g.auc) << "\n";
    }
    for (const auto& [mode, d] : rep.iou) {
        os << "iou." << to_string(mode) << " = " << (d ? fmt(d->iou) : "n/a") << "\n";
        os << "dsc." << to_string(mode) << " = " << (d ? fmt(d->dsc) : "n/a") << "\n";
    }
    os << "entropy.malignant_mean = " << opt(rep.entropy_malignant) << "\n";
    os << "entropy.benign_mean = " << opt(rep.entropy_benign) << "\n";
    os << "entropy.uniform_baseline = " << opt(rep.entropy_uniform_baseline) << "\n";
    os << "proxy_f1.attention = " << opt(rep.proxy_f1_attention) << "\n";
    os << "proxy_f1.probability = " << opt(rep.proxy_f1_probability) << "\n";
    os << "roi_match_threshold = " << fmt(rep.roi_match_threshold) << "\n";
    os << "confusion_with_roi.columns = B+ROI B+noROI M+ROI M+noROI\n";
    const char* rows[2] = {"B-Case", "M-Case"};
    for (int r = 0; r < 2; ++r) {
        os << "confusion_with_roi." << rows[r] << " =";
        for (int c = 0; c < 4; ++c)
            os << " " << rep.confusion_with_roi[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        os << "\n";
    }
    return os.str();
}

}  // namespace mammil
