#include "mammil/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "mammil/errors.hpp"

namespace mammil {

namespace {

// label map of the largest 4-connected component above the threshold;
// returns false when nothing is above it
bool largest_component_bbox(const Grid& g, double threshold, std::int64_t& x0, std::int64_t& y0,
                            std::int64_t& x1, std::int64_t& y1) {
    std::vector<int> visited(static_cast<std::size_t>(g.numel()), 0);
    std::int64_t best_area = 0;
    auto above = [&](std::int64_t r, std::int64_t c) { return g.at(r, c) >= threshold; };
    for (std::int64_t r = 0; r < g.h; ++r) {
        for (std::int64_t c = 0; c < g.w; ++c) {
            const std::size_t start = static_cast<std::size_t>(r * g.w + c);
            if (visited[start] || !above(r, c)) continue;
            std::int64_t area = 0, bx0 = c, bx1 = c, by0 = r, by1 = r;
            std::queue<std::pair<std::int64_t, std::int64_t>> q;
            q.push({r, c});
            visited[start] = 1;
            while (!q.empty()) {
                auto [cr, cc] = q.front();
                q.pop();
                ++area;
                bx0 = std::min(bx0, cc);
                bx1 = std::max(bx1, cc);
                by0 = std::min(by0, cr);
                by1 = std::max(by1, cr);
                const std::int64_t dr[4] = {-1, 1, 0, 0};
                const std::int64_t dc[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const std::int64_t nr = cr + dr[k], nc = cc + dc[k];
                    if (nr < 0 || nr >= g.h || nc < 0 || nc >= g.w) continue;
                    const std::size_t ni = static_cast<std::size_t>(nr * g.w + nc);
                    if (visited[ni] || !above(nr, nc)) continue;
                    visited[ni] = 1;
                    q.push({nr, nc});
                }
            }
            if (area > best_area) {
                best_area = area;
                x0 = bx0;
                x1 = bx1 + 1;  // half-open
                y0 = by0;
                y1 = by1 + 1;
            }
        }
    }
    return best_area > 0;
}

}  // namespace

PreprocessResult preprocess_image(const Grid& raw, std::int64_t target_h, std::int64_t target_w,
                                  Side side) {
    if (raw.h < 1 || raw.w < 1) throw DataError("preprocess: empty image");
    if (target_h < 1 || target_w < 1) throw DataError("preprocess: non-positive target extents");

    double mx = 0.0;
    for (double v : raw.v) mx = std::max(mx, v);
    const double threshold = 0.05 * mx;
    std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    if (mx <= 0.0 || !largest_component_bbox(raw, threshold, x0, y0, x1, y1))
        throw DataError("preprocess: no foreground");

    PreprocessTransform t;
    t.crop_x0 = x0;
    t.crop_y0 = y0;
    t.crop_w = x1 - x0;
    t.crop_h = y1 - y0;
    t.flipped = side == Side::R;
    t.out_h = target_h;
    t.out_w = target_w;

    Grid crop(t.crop_h, t.crop_w);
    for (std::int64_t r = 0; r < t.crop_h; ++r)
        for (std::int64_t c = 0; c < t.crop_w; ++c) crop.at(r, c) = raw.at(y0 + r, x0 + c);
    if (t.flipped) crop = flip_horizontal(crop);

    // pad to the target aspect; content stays at the origin, so the padding
    // lands on the right (chest-wall-opposite) and bottom edges
    const double aspect = static_cast<double>(target_w) / static_cast<double>(target_h);
    std::int64_t pad_w = t.crop_w, pad_h = t.crop_h;
    const double cur = static_cast<double>(t.crop_w) / static_cast<double>(t.crop_h);
    if (cur < aspect)
        pad_w = static_cast<std::int64_t>(std::ceil(static_cast<double>(t.crop_h) * aspect));
    else if (cur > aspect)
        pad_h = static_cast<std::int64_t>(std::ceil(static_cast<double>(t.crop_w) / aspect));
    t.padded_w = pad_w;
    t.padded_h = pad_h;
    Grid padded(pad_h, pad_w, 0.0);
    for (std::int64_t r = 0; r < t.crop_h; ++r)
        for (std::int64_t c = 0; c < t.crop_w; ++c) padded.at(r, c) = crop.at(r, c);

    PreprocessResult res;
    res.pixels = resize_bilinear(padded, target_h, target_w);
    for (auto& v : res.pixels.v) v = std::clamp(v, 0.0, 1.0);
    res.transform = t;
    return res;
}

bool map_roi_box(const RoiBox& in, const PreprocessTransform& t, RoiBox& out) {
    // crop
    double bx0 = static_cast<double>(std::max(in.x0 - t.crop_x0, std::int64_t{0}));
    double bx1 = static_cast<double>(std::min(in.x1 - t.crop_x0, t.crop_w));
    double by0 = static_cast<double>(std::max(in.y0 - t.crop_y0, std::int64_t{0}));
    double by1 = static_cast<double>(std::min(in.y1 - t.crop_y0, t.crop_h));
    if (bx0 >= bx1 || by0 >= by1) return false;
    // flip
    if (t.flipped) {
        const double nx0 = static_cast<double>(t.crop_w) - bx1;
        const double nx1 = static_cast<double>(t.crop_w) - bx0;
        bx0 = nx0;
        bx1 = nx1;
    }
    // pad adds nothing; resize scales
    const double sx = static_cast<double>(t.out_w) / static_cast<double>(t.padded_w);
    const double sy = static_cast<double>(t.out_h) / static_cast<double>(t.padded_h);
    out = in;
    out.x0 = static_cast<std::int64_t>(std::floor(bx0 * sx));
    out.x1 = static_cast<std::int64_t>(std::ceil(bx1 * sx));
    out.y0 = static_cast<std::int64_t>(std::floor(by0 * sy));
    out.y1 = static_cast<std::int64_t>(std::ceil(by1 * sy));
    out.x0 = std::clamp<std::int64_t>(out.x0, 0, t.out_w - 1);
    out.y0 = std::clamp<std::int64_t>(out.y0, 0, t.out_h - 1);
    out.x1 = std::clamp<std::int64_t>(out.x1, out.x0 + 1, t.out_w);
    out.y1 = std::clamp<std::int64_t>(out.y1, out.y0 + 1, t.out_h);
    return true;
}

void preprocess_cases(std::vector<CaseRecord>& cases, std::int64_t target_h,
                      std::int64_t target_w) {
    for (auto& c : cases) {
        for (auto& img : c.images) {
            PreprocessResult res = preprocess_image(img.pixels, target_h, target_w, img.side);
            std::vector<RoiBox> mapped;
            for (const auto& box : img.roi_boxes) {
                RoiBox m;
                if (map_roi_box(box, res.transform, m)) mapped.push_back(m);
            }
            img.pixels = std::move(res.pixels);
            img.roi_boxes = std::move(mapped);
        }
    }
}

}  // namespace mammil
