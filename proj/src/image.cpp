#include "mammil/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mammil/errors.hpp"

namespace mammil {

namespace {

// skip whitespace and '#' comment lines between header tokens
int next_header_token(std::istream& is, std::string& tok) {
    tok.clear();
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            if (!tok.empty()) return 0;
        } else {
            tok.push_back(static_cast<char>(c));
        }
        c = is.get();
    }
    return tok.empty() ? -1 : 0;
}

}  // namespace

Grid read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("pgm: cannot open " + path);
    std::string tok;
    if (next_header_token(is, tok) != 0 || tok != "P5")
        throw DataError("pgm: " + path + " is not a binary P5 graymap");
    std::int64_t w = 0, h = 0, maxval = 0;
    if (next_header_token(is, tok) != 0) throw DataError("pgm: truncated header in " + path);
    w = std::stoll(tok);
    if (next_header_token(is, tok) != 0) throw DataError("pgm: truncated header in " + path);
    h = std::stoll(tok);
    if (next_header_token(is, tok) != 0) throw DataError("pgm: truncated header in " + path);
    maxval = std::stoll(tok);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw DataError("pgm: bad header in " + path);
    Grid g(h, w);
    const std::int64_t n = h * w;
    if (maxval <= 255) {
        std::vector<unsigned char> buf(static_cast<std::size_t>(n));
        is.read(reinterpret_cast<char*>(buf.data()), n);
        if (!is) throw DataError("pgm: truncated pixel data in " + path);
        for (std::int64_t i = 0; i < n; ++i)
            g.v[static_cast<std::size_t>(i)] = static_cast<double>(buf[i]) / static_cast<double>(maxval);
    } else {
        std::vector<unsigned char> buf(static_cast<std::size_t>(2 * n));
        is.read(reinterpret_cast<char*>(buf.data()), 2 * n);
        if (!is) throw DataError("pgm: truncated pixel data in " + path);
        for (std::int64_t i = 0; i < n; ++i) {
            const int hi = buf[static_cast<std::size_t>(2 * i)];
            const int lo = buf[static_cast<std::size_t>(2 * i + 1)];
            g.v[static_cast<std::size_t>(i)] =
                static_cast<double>((hi << 8) | lo) / static_cast<double>(maxval);
        }
    }
    return g;
}

void write_pgm(const std::string& path, const Grid& g, int maxval) {
    if (maxval < 1 || maxval > 65535) throw DataError("pgm: bad maxval " + std::to_string(maxval));
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("pgm: cannot open " + path + " for writing");
    os << "P5\n" << g.w << " " << g.h << "\n" << maxval << "\n";
    auto quantize = [maxval](double v) {
        const double c = std::clamp(v, 0.0, 1.0);
        return static_cast<int>(std::lround(c * maxval));
    };
    if (maxval <= 255) {
        std::vector<unsigned char> buf(static_cast<std::size_t>(g.numel()));
        for (std::int64_t i = 0; i < g.numel(); ++i)
            buf[static_cast<std::size_t>(i)] =
                static_cast<unsigned char>(quantize(g.v[static_cast<std::size_t>(i)]));
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    } else {
        std::vector<unsigned char> buf(static_cast<std::size_t>(2 * g.numel()));
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const int q = quantize(g.v[static_cast<std::size_t>(i)]);
            buf[static_cast<std::size_t>(2 * i)] = static_cast<unsigned char>((q >> 8) & 0xff);
            buf[static_cast<std::size_t>(2 * i + 1)] = static_cast<unsigned char>(q & 0xff);
        }
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!os) throw DataError("pgm: write to " + path + " failed");
}

Grid resize_bilinear(const Grid& src, std::int64_t out_h, std::int64_t out_w) {
    if (out_h < 1 || out_w < 1) throw DataError("resize: non-positive target extents");
    Grid dst(out_h, out_w);
    const double sy = static_cast<double>(src.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(src.w) / static_cast<double>(out_w);
    for (std::int64_t r = 0; r < out_h; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.h - 1));
        const auto y0 = static_cast<std::int64_t>(fy);
        const std::int64_t y1 = std::min(y0 + 1, src.h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t c = 0; c < out_w; ++c) {
            const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.w - 1));
            const auto x0 = static_cast<std::int64_t>(fx);
            const std::int64_t x1 = std::min(x0 + 1, src.w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
            const double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
            dst.at(r, c) = top * (1.0 - wy) + bot * wy;
        }
    }
    return dst;
}

Grid flip_horizontal(const Grid& src) {
    Grid dst(src.h, src.w);
    for (std::int64_t r = 0; r < src.h; ++r)
        for (std::int64_t c = 0; c < src.w; ++c) dst.at(r, c) = src.at(r, src.w - 1 - c);
    return dst;
}

}  // namespace mammil
