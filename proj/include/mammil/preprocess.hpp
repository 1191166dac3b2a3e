#pragma once

#include "mammil/records.hpp"

namespace mammil {

// Geometry of one preprocessing run, kept so groundtruth boxes stored in
// original-image space can be mapped into model-input space.
struct PreprocessTransform {
    std::int64_t crop_x0 = 0, crop_y0 = 0;  // bounding box of the breast region
    std::int64_t crop_w = 0, crop_h = 0;
    bool flipped = false;                   // right-side images are mirrored
    std::int64_t padded_w = 0, padded_h = 0;
    std::int64_t out_w = 0, out_h = 0;
};

struct PreprocessResult {
    Grid pixels;  // (target_h, target_w), values in [0,1]
    PreprocessTransform transform;
};

// Contour crop and normalization: threshold at 5% of the max intensity,
// keep the largest 4-connected foreground component, crop to its bounding
// box, mirror R-side images so the chest wall sits at the left edge,
// zero-pad on the right/bottom up to the target aspect, resize bilinearly.
// Throws DataError("no foreground") when the mask is empty.
PreprocessResult preprocess_image(const Grid& raw, std::int64_t target_h, std::int64_t target_w,
                                  Side side);

// Map a box given in raw-image coordinates through the transform. Returns
// false when the box falls entirely outside the cropped region.
bool map_roi_box(const RoiBox& in, const PreprocessTransform& t, RoiBox& out);

// Preprocess every image of every case in place, mapping the groundtruth
// boxes along. Boxes lost to the crop are dropped.
void preprocess_cases(std::vector<CaseRecord>& cases, std::int64_t target_h,
                      std::int64_t target_w);

}  // namespace mammil
