#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mammil {

// Plain 2-D grayscale grid, values in [0,1]. Raw pixel work happens here;
// tensors enter only at the model boundary.
struct Grid {
    std::int64_t h = 0, w = 0;
    std::vector<double> v;  // row-major

    Grid() = default;
    Grid(std::int64_t h_, std::int64_t w_, double fill = 0.0)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_ * w_), fill) {}

    double& at(std::int64_t r, std::int64_t c) { return v[static_cast<std::size_t>(r * w + c)]; }
    double at(std::int64_t r, std::int64_t c) const {
        return v[static_cast<std::size_t>(r * w + c)];
    }
    std::int64_t numel() const { return h * w; }
};

// Binary portable graymap (P5). maxval <= 255 reads/writes one byte per
// pixel, larger maxval two bytes big-endian per the netpbm spec.
Grid read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Grid& g, int maxval = 255);

Grid resize_bilinear(const Grid& src, std::int64_t out_h, std::int64_t out_w);
Grid flip_horizontal(const Grid& src);

}  // namespace mammil
