#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mammil/image.hpp"
#include "mammil/rng.hpp"

namespace mammil {

enum class Side { L, R };
enum class View { CC, MLO, LM, ML, XCCL };
enum class Label { benign = 0, malignant = 1 };
enum class RoiKind { mass, calcification };

Side parse_side(const std::string& tok);
View parse_view(const std::string& tok);
Label parse_label(const std::string& tok);
RoiKind parse_roi_kind(const std::string& tok);
std::string to_string(Side s);
std::string to_string(View v);
std::string to_string(Label l);
std::string to_string(RoiKind k);

bool is_standard_view(View v);  // CC or MLO

// Half-open pixel box [x0,x1) x [y0,y1) in the coordinate space of the image
// it is attached to.
struct RoiBox {
    std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    RoiKind kind = RoiKind::mass;
    Label label = Label::benign;

    std::int64_t area() const { return (x1 - x0) * (y1 - y0); }
    bool valid_within(std::int64_t h, std::int64_t w) const {
        return x0 < x1 && y0 < y1 && x0 >= 0 && y0 >= 0 && x1 <= w && y1 <= h;
    }
};

struct ImageRecord {
    Side side = Side::L;
    View view = View::CC;
    Grid pixels;  // values in [0,1]
    std::optional<Label> image_label;
    std::vector<RoiBox> roi_boxes;  // groundtruth, evaluation only
    std::string source_path;
};

struct CaseRecord {
    std::string case_id;
    std::vector<ImageRecord> images;  // M >= 1
    Label case_label = Label::benign;
};

// Throws DataError on any invariant violation: duplicate (side,view), empty
// image list, bounds errors, or a case label inconsistent with fully-known
// image labels.
void validate_case(const CaseRecord& c);

// Case grouping used by dynamic-training batching and the group reports.
enum class CaseGroupBase {
    single,          // 1L/1R: exactly one image
    multi_one_side,  // nL/mR: >1 image, all one side
    one_each_side,   // 1L+1R: exactly one image per side
    multi_both,      // nL+mR: everything else
};

struct CaseGroup {
    CaseGroupBase base = CaseGroupBase::single;
    bool std_views = false;  // all views in {CC, MLO}
    bool four_std = false;   // exactly L-CC, L-MLO, R-CC, R-MLO
    bool mixed = false;      // at least one non-standard view
};

CaseGroup case_group_of(const CaseRecord& c);
std::string to_string(CaseGroupBase g);

// Multiset of (side, view) as a canonical string key; identical keys mean
// the cases can share a training batch.
std::string view_combination_key(const CaseRecord& c);

// Partition into batches of cases with identical view combinations.
// The Rng overload additionally shuffles case order inside groups and the
// order of the emitted batches.
std::vector<std::vector<std::size_t>> group_batches(const std::vector<CaseRecord>& cases,
                                                    std::size_t batch_size);
std::vector<std::vector<std::size_t>> group_batches(const std::vector<CaseRecord>& cases,
                                                    std::size_t batch_size, Rng& rng);

}  // namespace mammil
