#include "mammil/records.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "mammil/errors.hpp"

namespace mammil {

Side parse_side(const std::string& tok) {
    if (tok == "L") return Side::L;
    if (tok == "R") return Side::R;
    throw DataError("unknown side token '" + tok + "' (expected L or R)");
}

View parse_view(const std::string& tok) {
    if (tok == "CC") return View::CC;
    if (tok == "MLO") return View::MLO;
    if (tok == "LM") return View::LM;
    if (tok == "ML") return View::ML;
    if (tok == "XCCL") return View::XCCL;
    throw DataError("unknown view token '" + tok + "' (expected CC, MLO, LM, ML or XCCL)");
}

Label parse_label(const std::string& tok) {
    if (tok == "benign" || tok == "0") return Label::benign;
    if (tok == "malignant" || tok == "1") return Label::malignant;
    throw DataError("unknown label token '" + tok + "' (expected benign or malignant)");
}

RoiKind parse_roi_kind(const std::string& tok) {
    if (tok == "mass") return RoiKind::mass;
    if (tok == "calcification" || tok == "calc") return RoiKind::calcification;
    throw DataError("unknown roi kind '" + tok + "' (expected mass or calcification)");
}

std::string to_string(Side s) { return s == Side::L ? "L" : "R"; }

std::string to_string(View v) {
    switch (v) {
        case View::CC: return "CC";
        case View::MLO: return "MLO";
        case View::LM: return "LM";
        case View::ML: return "ML";
        case View::XCCL: return "XCCL";
    }
    return "?";
}

std::string to_string(Label l) { return l == Label::benign ? "benign" : "malignant"; }

std::string to_string(RoiKind k) { return k == RoiKind::mass ? "mass" : "calcification"; }

bool is_standard_view(View v) { return v == View::CC || v == View::MLO; }

void validate_case(const CaseRecord& c) {
    if (c.images.empty()) throw DataError("case " + c.case_id + ": no images");
    std::set<std::pair<Side, View>> seen;
    bool all_labeled = true;
    bool any_malignant = false;
    for (const auto& img : c.images) {
        if (!seen.insert({img.side, img.view}).second)
            throw DataError("case " + c.case_id + ": duplicate image for " + to_string(img.side) +
                            "-" + to_string(img.view));
        for (const auto& box : img.roi_boxes)
            if (!box.valid_within(img.pixels.h, img.pixels.w))
                throw DataError("case " + c.case_id + ": roi box out of bounds on " +
                                to_string(img.side) + "-" + to_string(img.view));
        if (img.image_label) {
            any_malignant = any_malignant || *img.image_label == Label::malignant;
        } else {
            all_labeled = false;
        }
    }
    if (all_labeled) {
        const Label implied = any_malignant ? Label::malignant : Label::benign;
        if (implied != c.case_label)
            throw DataError("case " + c.case_id + ": case label " + to_string(c.case_label) +
                            " inconsistent with image labels (implied " + to_string(implied) + ")");
    }
}

CaseGroup case_group_of(const CaseRecord& c) {
    CaseGroup g;
    std::size_t n_left = 0, n_right = 0;
    bool all_std = true;
    std::multiset<std::pair<Side, View>> combo;
    for (const auto& img : c.images) {
        (img.side == Side::L ? n_left : n_right)++;
        all_std = all_std && is_standard_view(img.view);
        combo.insert({img.side, img.view});
    }
    const std::size_t total = c.images.size();
    if (total == 1)
        g.base = CaseGroupBase::single;
    else if (n_left == 0 || n_right == 0)
        g.base = CaseGroupBase::multi_one_side;
    else if (n_left == 1 && n_right == 1)
        g.base = CaseGroupBase::one_each_side;
    else
        g.base = CaseGroupBase::multi_both;
    g.std_views = all_std;
    g.mixed = !all_std;
    const std::multiset<std::pair<Side, View>> four_std = {{Side::L, View::CC},
                                                           {Side::L, View::MLO},
                                                           {Side::R, View::CC},
                                                           {Side::R, View::MLO}};
    g.four_std = combo == four_std;
    return g;
}

std::string to_string(CaseGroupBase g) {
    switch (g) {
        case CaseGroupBase::single: return "1L/1R";
        case CaseGroupBase::multi_one_side: return "nL/mR";
        case CaseGroupBase::one_each_side: return "1L+1R";
        case CaseGroupBase::multi_both: return "nL+mR";
    }
    return "?";
}

std::string view_combination_key(const CaseRecord& c) {
    std::vector<std::string> parts;
    parts.reserve(c.images.size());
    for (const auto& img : c.images) parts.push_back(to_string(img.side) + "-" + to_string(img.view));
    std::sort(parts.begin(), parts.end());
    std::ostringstream os;
    for (std::size_t i = 0; i < parts.size(); ++i) os << (i ? "+" : "") << parts[i];
    return os.str();
}

static std::vector<std::vector<std::size_t>> batches_from_groups(
    const std::vector<CaseRecord>& cases, std::size_t batch_size, Rng* rng) {
    if (batch_size < 1) throw DataError("group_batches: batch_size must be >= 1");
    // first-appearance group order keeps the no-rng overload deterministic
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const std::string key = view_combination_key(cases[i]);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) group_order.push_back(key);
        it->second.push_back(i);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (const auto& key : group_order) {
        auto& members = groups[key];
        if (rng) rng->shuffle(members);
        for (std::size_t start = 0; start < members.size(); start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, members.size());
            batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                                 members.begin() + static_cast<std::ptrdiff_t>(stop));
        }
    }
    if (rng) rng->shuffle(batches);
    return batches;
}

std::vector<std::vector<std::size_t>> group_batches(const std::vector<CaseRecord>& cases,
                                                    std::size_t batch_size) {
    return batches_from_groups(cases, batch_size, nullptr);
}

std::vector<std::vector<std::size_t>> group_batches(const std::vector<CaseRecord>& cases,
                                                    std::size_t batch_size, Rng& rng) {
    return batches_from_groups(cases, batch_size, &rng);
}

}  // namespace mammil
