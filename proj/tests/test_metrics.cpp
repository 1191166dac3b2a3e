#include <doctest.h>

#include <cmath>

#include "mammil/metrics.hpp"

using namespace mammil;

namespace {

// brute-force pair-counting oracle for the rank-based AUC
double auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// rasterized pixel-count oracle for box overlap
IouDsc raster_oracle(const RoiBox& a, const RoiBox& b, std::int64_t h, std::int64_t w) {
    std::int64_t inter = 0, area_a = 0, area_b = 0;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
            const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
            inter += in_a && in_b;
            area_a += in_a;
            area_b += in_b;
        }
    }
    IouDsc out;
    const std::int64_t uni = area_a + area_b - inter;
    out.iou = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    out.dsc = area_a + area_b
                  ? 2.0 * static_cast<double>(inter) / static_cast<double>(area_a + area_b)
                  : 0.0;
    return out;
}

RoiBox random_box(Rng& rng, std::int64_t h, std::int64_t w) {
    RoiBox b;
    b.x0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(w - 1)));
    b.y0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(h - 1)));
    b.x1 = b.x0 + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(w - b.x0)));
    b.y1 = b.y0 + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(h - b.y0)));
    return b;
}

}  // namespace

TEST_CASE("f1 reference values") {
    CHECK(f1_score({1, 0, 1}, {1, 0, 1}) == 1.0);
    CHECK(f1_score({0, 0, 0}, {1, 0, 1}) == 0.0);
    // TP=2, FP=1, FN=1: precision = recall = 2/3
    CHECK(f1_score({1, 1, 1, 0, 0}, {1, 1, 0, 1, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("auc reference values and errors") {
    CHECK(auc_score({0.9, 0.1}, {1, 0}) == 1.0);
    CHECK(auc_score({0.5, 0.5, 0.5}, {1, 0, 1}) == 0.5);
    CHECK(auc_score({0.8, 0.6, 0.4}, {1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(auc_score({0.2, 0.7}, {1, 1}), doctest::Contains("AUC undefined"),
                         DataError);
}

TEST_CASE("auc matches the brute-force oracle on random tied instances") {
    Rng rng(2718);
    for (int round = 0; round < 200; ++round) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (auto& s : scores) s = std::round(rng.uniform() * 8.0) / 8.0;  // force ties
        bool has_pos = false, has_neg = false;
        for (auto& l : labels) {
            l = rng.below(2) == 0 ? 0 : 1;
            (l ? has_pos : has_neg) = true;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[n - 1] = 0;
        CHECK(std::fabs(auc_score(scores, labels) - auc_oracle(scores, labels)) < 1e-12);
    }
}

TEST_CASE("iou and dsc reference values") {
    const RoiBox a{0, 0, 2, 2, RoiKind::mass, Label::malignant};
    const RoiBox b{1, 1, 3, 3, RoiKind::mass, Label::malignant};
    const auto same = iou_dsc_boxes(a, a);
    CHECK(same.iou == 1.0);
    CHECK(same.dsc == 1.0);
    const RoiBox far{10, 10, 12, 12, RoiKind::mass, Label::benign};
    const auto none = iou_dsc_boxes(a, far);
    CHECK(none.iou == 0.0);
    CHECK(none.dsc == 0.0);
    const auto overlap = iou_dsc_boxes(a, b);
    CHECK(overlap.iou == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(overlap.dsc == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("iou matches the rasterization oracle and the dsc identity holds") {
    Rng rng(3141);
    for (int round = 0; round < 200; ++round) {
        const RoiBox a = random_box(rng, 64, 64);
        const RoiBox b = random_box(rng, 64, 64);
        const auto fast = iou_dsc_boxes(a, b);
        const auto slow = raster_oracle(a, b, 64, 64);
        CHECK(fast.iou == doctest::Approx(slow.iou).epsilon(1e-12));
        CHECK(fast.dsc == doctest::Approx(slow.dsc).epsilon(1e-12));
        // DSC = 2 IoU / (1 + IoU)
        CHECK(std::fabs(fast.dsc - 2.0 * fast.iou / (1.0 + fast.iou)) < 1e-12);
    }
}

TEST_CASE("attention entropy reference values and bounds") {
    CHECK(attention_entropy({0.25, 0.25, 0.25, 0.25}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(attention_entropy({1.0, 0.0, 0.0}) == 0.0);
    CHECK(attention_entropy({0.5, 0.5, 0.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Rng rng(99);
    for (int round = 0; round < 50; ++round) {
        const std::size_t m = 1 + rng.below(8);
        std::vector<double> w(m);
        double total = 0.0;
        for (auto& v : w) {
            v = rng.uniform(0.0, 1.0) + 1e-9;
            total += v;
        }
        for (auto& v : w) v /= total;
        const double h = attention_entropy(w);
        CHECK(h >= -1e-12);
        CHECK(h <= std::log(static_cast<double>(m)) + 1e-9);
    }
}

namespace {

CaseRecord labeled_case(const std::string& id, Label case_label,
                        const std::vector<Label>& image_labels) {
    CaseRecord c;
    c.case_id = id;
    c.case_label = case_label;
    const std::pair<Side, View> combos[] = {{Side::L, View::CC},
                                            {Side::L, View::MLO},
                                            {Side::R, View::CC},
                                            {Side::R, View::MLO}};
    for (std::size_t i = 0; i < image_labels.size(); ++i) {
        ImageRecord img;
        img.side = combos[i].first;
        img.view = combos[i].second;
        img.pixels = Grid(8, 8, 0.4);
        img.image_label = image_labels[i];
        if (image_labels[i] == Label::malignant)
            img.roi_boxes.push_back(RoiBox{1, 1, 4, 4, RoiKind::mass, Label::malignant});
        c.images.push_back(std::move(img));
    }
    return c;
}

CaseEvaluation eval_of(const CaseRecord& c, double prob, std::vector<double> attention,
                       std::vector<double> probs = {}) {
    CaseEvaluation ev;
    ev.record = &c;
    ev.final_prob = prob;
    ev.image_attention = std::move(attention);
    ev.image_probs = std::move(probs);
    ev.candidates.resize(c.images.size());
    return ev;
}

}  // namespace

TEST_CASE("proxy labels from attention use the strict 0.25 rule") {
    const auto c = labeled_case("p", Label::malignant,
                                {Label::malignant, Label::benign, Label::benign, Label::benign});
    SUBCASE("a dominant image is the only malignant one") {
        const auto ev = eval_of(c, 0.9, {0.7, 0.1, 0.1, 0.1});
        const auto labels = proxy_image_labels(ev, ProxySource::attention);
        CHECK(labels == std::vector<Label>{Label::malignant, Label::benign, Label::benign,
                                           Label::benign});
    }
    SUBCASE("exactly uniform quarters stay benign under the strict inequality") {
        const auto ev = eval_of(c, 0.9, {0.25, 0.25, 0.25, 0.25});
        for (Label l : proxy_image_labels(ev, ProxySource::attention)) CHECK(l == Label::benign);
    }
    SUBCASE("probability source needs image probabilities") {
        const auto ev = eval_of(c, 0.9, {0.7, 0.1, 0.1, 0.1});
        CHECK_THROWS_WITH_AS(proxy_image_labels(ev, ProxySource::probability),
                             doctest::Contains("unavailable"), DataError);
        const auto ev_is = eval_of(c, 0.9, {0.7, 0.1, 0.1, 0.1}, {0.8, 0.2, 0.4, 0.6});
        CHECK(proxy_image_labels(ev_is, ProxySource::probability) ==
              std::vector<Label>{Label::malignant, Label::benign, Label::benign,
                                 Label::malignant});
    }
}

TEST_CASE("single-image malignant case gets attention one, hence malignant") {
    const auto c = [] {
        CaseRecord cc;
        cc.case_id = "solo";
        cc.case_label = Label::malignant;
        ImageRecord img;
        img.side = Side::L;
        img.view = View::CC;
        img.pixels = Grid(8, 8, 0.4);
        img.image_label = Label::malignant;
        cc.images.push_back(std::move(img));
        return cc;
    }();
    const auto ev = eval_of(c, 0.8, {1.0});
    CHECK(proxy_image_labels(ev, ProxySource::attention) ==
          std::vector<Label>{Label::malignant});
}

TEST_CASE("report assembles groups, confusion and totals") {
    const auto c1 = labeled_case("m1", Label::malignant,
                                 {Label::malignant, Label::benign, Label::benign, Label::benign});
    const auto c2 = labeled_case("b1", Label::benign,
                                 {Label::benign, Label::benign, Label::benign, Label::benign});
    const auto c3 = labeled_case("m2", Label::malignant,
                                 {Label::malignant, Label::malignant, Label::benign,
                                  Label::benign});
    std::vector<CaseEvaluation> evals;
    evals.push_back(eval_of(c1, 0.9, {0.7, 0.1, 0.1, 0.1}));
    evals.push_back(eval_of(c2, 0.2, {0.25, 0.25, 0.25, 0.25}));
    evals.push_back(eval_of(c3, 0.4, {0.3, 0.3, 0.2, 0.2}));
    // give the first malignant case a candidate matching its groundtruth
    PatchCandidate hit;
    hit.box = RoiBox{1, 1, 4, 4, RoiKind::mass, Label::malignant};
    hit.attention = 1.0;
    evals[0].candidates[0].push_back(hit);

    const auto rep = build_metrics_report(evals, 0.1);
    CHECK(rep.n_cases == 3);
    REQUIRE(rep.auc.has_value());
    // the All group equals the overall metrics
    CHECK(rep.groups.back().first == "All");
    CHECK(rep.groups.back().second.auc == rep.auc);
    // all-4-std data: only nL+mR, std, 4-std and All are populated
    for (const auto& [key, g] : rep.groups) {
        if (key == "nL+mR" || key == "std" || key == "4-std" || key == "All")
            CHECK(g.n == 3);
        else
            CHECK(g.n == 0);
    }
    // correctly classified malignant with matched ROI lands in M-Case x M+ROI
    CHECK(rep.confusion_with_roi[1][2] == 1);
    int total = 0;
    for (const auto& row : rep.confusion_with_roi)
        for (int v : row) total += v;
    CHECK(total == rep.n_cases);
    // benign case without any candidate match counts as predicted-benign noROI
    CHECK(rep.confusion_with_roi[0][1] == 1);
    // misclassified malignant without ROI hit
    CHECK(rep.confusion_with_roi[1][1] == 1);

    const std::string text = format_metrics_report(rep);
    CHECK(text.find("group.All.auc = ") != std::string::npos);
    CHECK(text.find("confusion_with_roi.M-Case =") != std::string::npos);
    CHECK(format_metrics_report(rep) == text);  // stable across calls
}

TEST_CASE("single-class groups report no auc") {
    const auto c1 = labeled_case("b1", Label::benign,
                                 {Label::benign, Label::benign, Label::benign, Label::benign});
    const auto c2 = labeled_case("b2", Label::benign,
                                 {Label::benign, Label::benign, Label::benign, Label::benign});
    std::vector<CaseEvaluation> evals{eval_of(c1, 0.3, {0.25, 0.25, 0.25, 0.25}),
                                      eval_of(c2, 0.1, {0.25, 0.25, 0.25, 0.25})};
    const auto rep = build_metrics_report(evals, 0.1);
    CHECK(!rep.auc.has_value());
    const std::string text = format_metrics_report(rep);
    CHECK(text.find("auc = n/a") != std::string::npos);
}

TEST_CASE("best-of-topk dominates top-attention per image") {
    Rng rng(555);
    for (int round = 0; round < 100; ++round) {
        std::vector<PatchCandidate> cands(4);
        for (auto& c : cands) {
            c.box = random_box(rng, 32, 32);
            c.attention = rng.uniform();
        }
        std::vector<RoiBox> gt{random_box(rng, 32, 32)};
        const auto best = image_iou_dsc(cands, gt, IouMode::best_of_topk);
        const auto top = image_iou_dsc(cands, gt, IouMode::top_attention);
        REQUIRE(best.has_value());
        REQUIRE(top.has_value());
        CHECK(best->iou >= top->iou);
        CHECK(top->iou >= 0.0);
    }
}

TEST_CASE("mean-all-rois averages per-groundtruth best matches") {
    std::vector<PatchCandidate> cands(2);
    cands[0].box = RoiBox{0, 0, 2, 2, RoiKind::mass, Label::malignant};
    cands[1].box = RoiBox{10, 10, 12, 12, RoiKind::mass, Label::malignant};
    cands[0].attention = 0.9;
    cands[1].attention = 0.1;
    std::vector<RoiBox> gt{RoiBox{0, 0, 2, 2, RoiKind::mass, Label::malignant},
                           RoiBox{20, 20, 22, 22, RoiKind::mass, Label::malignant}};
    const auto mean_mode = image_iou_dsc(cands, gt, IouMode::mean_all_rois);
    REQUIRE(mean_mode.has_value());
    CHECK(mean_mode->iou == doctest::Approx(0.5).epsilon(1e-12));  // (1 + 0) / 2
    CHECK(!image_iou_dsc(cands, {}, IouMode::best_of_topk).has_value());
}
