#include "mammil/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mammil/errors.hpp"

namespace mammil {

void validate_config(const SyntheticConfig& cfg) {
    if (cfg.n_cases < 1) throw ConfigError("synthetic: n_cases must be >= 1");
    if (cfg.image_height < 16 || cfg.image_width < 16)
        throw ConfigError("synthetic: image extents must be >= 16");
    if (cfg.malignant_fraction <= 0.0 || cfg.malignant_fraction >= 1.0)
        throw ConfigError("synthetic: malignant_fraction must be in (0,1)");
    double mass = 0.0;
    for (double p : cfg.view_count_distribution) {
        if (p < 0.0) throw ConfigError("synthetic: negative probability in view_count_distribution");
        mass += p;
    }
    if (std::fabs(mass - 1.0) > 1e-9)
        throw ConfigError("synthetic: view_count_distribution must sum to 1");
    if (mass <= 0.0) throw ConfigError("synthetic: view_count_distribution has zero mass");
    const std::int64_t explicit_total = cfg.train_cases + cfg.val_cases + cfg.test_cases;
    if (explicit_total != 0 && explicit_total != cfg.n_cases)
        throw ConfigError("synthetic: explicit split sizes must sum to n_cases");
}

namespace {

struct BreastGeometry {
    double cy;       // vertical center of the half-ellipse
    double axis_v;   // vertical semi-axis
    double axis_h;   // horizontal extent from the chest wall (left edge)
};

// smoothed uniform noise: coarse grid upsampled bilinearly
Grid noise_field(std::int64_t h, std::int64_t w, Rng& rng, double amplitude) {
    const std::int64_t ch = std::max<std::int64_t>(2, h / 8);
    const std::int64_t cw = std::max<std::int64_t>(2, w / 8);
    Grid coarse(ch, cw);
    for (auto& v : coarse.v) v = rng.uniform(-amplitude, amplitude);
    return resize_bilinear(coarse, h, w);
}

Grid make_background(std::int64_t h, std::int64_t w, const BreastGeometry& geo, Rng& rng) {
    Grid g(h, w, 0.0);
    Grid noise = noise_field(h, w, rng, 0.12);
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            const double ny = (static_cast<double>(r) - geo.cy) / geo.axis_v;
            const double nx = static_cast<double>(c) / geo.axis_h;
            const double d2 = ny * ny + nx * nx;
            if (d2 > 1.0) continue;  // outside the breast
            const double falloff = 0.35 + 0.25 * (1.0 - d2);  // denser near the chest wall
            g.at(r, c) = std::clamp(falloff + noise.at(r, c), 0.02, 0.95);
        }
    }
    return g;
}

struct Lesion {
    double cx, cy, radius;
    bool malignant;
    double phase;  // spicule rotation
};

void plant_lesion(Grid& g, const Lesion& les, double contrast) {
    const double reach = les.radius * (les.malignant ? 2.2 : 1.8);
    const auto r0 = static_cast<std::int64_t>(std::floor(les.cy - reach));
    const auto r1 = static_cast<std::int64_t>(std::ceil(les.cy + reach));
    const auto c0 = static_cast<std::int64_t>(std::floor(les.cx - reach));
    const auto c1 = static_cast<std::int64_t>(std::ceil(les.cx + reach));
    const double amplitude = les.malignant ? contrast : 0.4 * contrast;
    for (std::int64_t r = std::max<std::int64_t>(r0, 0); r <= std::min(r1, g.h - 1); ++r) {
        for (std::int64_t c = std::max<std::int64_t>(c0, 0); c <= std::min(c1, g.w - 1); ++c) {
            if (g.at(r, c) <= 0.0) continue;  // lesions live on breast tissue only
            const double dy = static_cast<double>(r) - les.cy;
            const double dx = static_cast<double>(c) - les.cx;
            const double d = std::sqrt(dx * dx + dy * dy);
            double eff_radius = les.radius;
            if (les.malignant) {
                // star-like spiculation: radius modulated over angle
                const double theta = std::atan2(dy, dx);
                eff_radius = les.radius * (0.55 + 0.65 * std::fabs(std::cos(3.0 * theta + les.phase)));
            }
            const double z = d / std::max(eff_radius, 1e-6);
            const double bump = amplitude * std::exp(-z * z * 1.6);
            g.at(r, c) = std::clamp(g.at(r, c) + bump, 0.0, 1.0);
        }
    }
}

RoiBox lesion_box(const Lesion& les, std::int64_t h, std::int64_t w) {
    const double reach = les.radius * (les.malignant ? 1.6 : 1.3);
    RoiBox b;
    b.x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(les.cx - reach)), 0, w - 1);
    b.y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(les.cy - reach)), 0, h - 1);
    b.x1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(les.cx + reach)) + 1, b.x0 + 1, w);
    b.y1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(les.cy + reach)) + 1, b.y0 + 1, h);
    b.kind = les.malignant ? RoiKind::mass : RoiKind::mass;
    b.label = les.malignant ? Label::malignant : Label::benign;
    return b;
}

std::vector<std::pair<Side, View>> sample_case_shape(const SyntheticConfig& cfg, Rng& rng) {
    const double roll = rng.uniform();
    double acc = 0.0;
    int shape = 0;
    for (int i = 0; i < 5; ++i) {
        acc += cfg.view_count_distribution[static_cast<std::size_t>(i)];
        if (roll < acc) {
            shape = i;
            break;
        }
        shape = i;
    }
    auto coin_side = [&] { return rng.below(2) == 0 ? Side::L : Side::R; };
    auto coin_std_view = [&] { return rng.below(2) == 0 ? View::CC : View::MLO; };
    std::vector<std::pair<Side, View>> images;
    switch (shape) {
        case 0:  // 1L/1R
            images.push_back({coin_side(), coin_std_view()});
            break;
        case 1: {  // nL/mR
            const Side s = coin_side();
            images.push_back({s, View::CC});
            images.push_back({s, View::MLO});
            if (rng.below(2) == 0) images.push_back({s, View::XCCL});
            break;
        }
        case 2:  // 1L+1R
            images.push_back({Side::L, coin_std_view()});
            images.push_back({Side::R, coin_std_view()});
            break;
        case 3:  // 4-standard
            images = {{Side::L, View::CC}, {Side::L, View::MLO}, {Side::R, View::CC},
                      {Side::R, View::MLO}};
            break;
        case 4: {  // 4-standard plus extras
            images = {{Side::L, View::CC}, {Side::L, View::MLO}, {Side::R, View::CC},
                      {Side::R, View::MLO}};
            const std::size_t extra_count = 1 + rng.below(2);
            const View pool[3] = {View::XCCL, View::LM, View::ML};
            for (std::size_t i = 0; i < extra_count; ++i)
                images.push_back({coin_side(), pool[rng.below(3)]});
            // drop accidental duplicates from the extras
            std::vector<std::pair<Side, View>> unique;
            for (const auto& sv : images)
                if (std::find(unique.begin(), unique.end(), sv) == unique.end())
                    unique.push_back(sv);
            images = unique;
            break;
        }
        default: break;
    }
    return images;
}

CaseRecord make_case(const SyntheticConfig& cfg, const std::string& case_id, Label label,
                     Rng& rng) {
    CaseRecord rec;
    rec.case_id = case_id;
    rec.case_label = label;
    const auto shape = sample_case_shape(cfg, rng);
    const std::int64_t h = cfg.image_height, w = cfg.image_width;

    // lesion geometry is sampled per case in breast-relative coordinates so
    // positions stay consistent across views of the same side
    const double rel_u = rng.uniform(0.2, 0.62);   // fraction of horizontal axis
    const double rel_v = rng.uniform(-0.45, 0.45); // fraction of vertical axis
    const double rel_r = rng.uniform(0.055, 0.095);

    // which side carries the malignant lesion, and which images of that side
    Side lesion_side = Side::L;
    std::vector<std::size_t> side_imgs;
    if (label == Label::malignant) {
        std::vector<Side> sides_present;
        for (const auto& sv : shape)
            if (std::find(sides_present.begin(), sides_present.end(), sv.first) ==
                sides_present.end())
                sides_present.push_back(sv.first);
        lesion_side = sides_present[rng.below(sides_present.size())];
        for (std::size_t i = 0; i < shape.size(); ++i)
            if (shape[i].first == lesion_side) side_imgs.push_back(i);
        // non-empty random subset
        const std::size_t count = 1 + rng.below(side_imgs.size());
        rng.shuffle(side_imgs);
        side_imgs.resize(count);
        std::sort(side_imgs.begin(), side_imgs.end());
    }

    // benign companion lesion on some cases, on a side of its own
    const bool has_benign_lesion = rng.uniform() < 0.55;
    const double ben_u = rng.uniform(0.2, 0.62);
    const double ben_v = rng.uniform(-0.45, 0.45);
    const double ben_r = rng.uniform(0.05, 0.085);
    Side benign_side = rng.below(2) == 0 ? Side::L : Side::R;
    if (label == Label::malignant) {
        // keep the benign blob off the malignant side so image labels stay clean
        benign_side = lesion_side == Side::L ? Side::R : Side::L;
    }
    const double spicule_phase = rng.uniform(0.0, 6.28318530717958648);

    for (std::size_t i = 0; i < shape.size(); ++i) {
        ImageRecord img;
        img.side = shape[i].first;
        img.view = shape[i].second;
        BreastGeometry geo;
        geo.cy = static_cast<double>(h) * rng.uniform(0.46, 0.54);
        geo.axis_v = static_cast<double>(h) * rng.uniform(0.40, 0.48);
        geo.axis_h = static_cast<double>(w) * rng.uniform(0.72, 0.90);
        Grid canvas = make_background(h, w, geo, rng);

        std::vector<Lesion> lesions;
        const bool malignant_here =
            label == Label::malignant &&
            std::find(side_imgs.begin(), side_imgs.end(), i) != side_imgs.end();
        if (malignant_here) {
            Lesion les;
            les.cx = geo.axis_h * (rel_u + rng.uniform(-0.03, 0.03));
            les.cy = geo.cy + geo.axis_v * (rel_v + rng.uniform(-0.03, 0.03));
            les.radius = rel_r * static_cast<double>(std::min(h, w));
            les.malignant = true;
            les.phase = spicule_phase;
            lesions.push_back(les);
        }
        if (has_benign_lesion && img.side == benign_side) {
            Lesion les;
            les.cx = geo.axis_h * (ben_u + rng.uniform(-0.03, 0.03));
            les.cy = geo.cy + geo.axis_v * (ben_v + rng.uniform(-0.03, 0.03));
            les.radius = ben_r * static_cast<double>(std::min(h, w));
            les.malignant = false;
            les.phase = 0.0;
            lesions.push_back(les);
        }
        for (const auto& les : lesions) {
            plant_lesion(canvas, les, cfg.lesion_contrast);
            img.roi_boxes.push_back(lesion_box(les, h, w));
        }
        img.image_label = malignant_here ? Label::malignant : Label::benign;

        // R-side images are acquired mirrored (chest wall on the right);
        // preprocessing flips them back
        if (img.side == Side::R) {
            canvas = flip_horizontal(canvas);
            for (auto& b : img.roi_boxes) {
                const std::int64_t nx0 = w - b.x1;
                const std::int64_t nx1 = w - b.x0;
                b.x0 = nx0;
                b.x1 = nx1;
            }
        }
        // quantize to 8-bit steps so manifest round trips are bit-exact
        for (auto& v : canvas.v) v = std::round(v * 255.0) / 255.0;
        img.pixels = std::move(canvas);
        rec.images.push_back(std::move(img));
    }
    validate_case(rec);
    return rec;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    validate_config(cfg);
    Rng rng(cfg.seed);

    const auto n = static_cast<std::size_t>(cfg.n_cases);
    const auto n_mal = static_cast<std::size_t>(
        std::llround(cfg.malignant_fraction * static_cast<double>(cfg.n_cases)));
    std::vector<Label> labels(n, Label::benign);
    for (std::size_t i = 0; i < std::min(n_mal, n); ++i) labels[i] = Label::malignant;
    rng.shuffle(labels);

    std::vector<CaseRecord> cases;
    cases.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::ostringstream id;
        id << "syn-" << std::setw(5) << std::setfill('0') << i;
        cases.push_back(make_case(cfg, id.str(), labels[i], rng));
    }

    // split sizes
    std::int64_t n_train = cfg.train_cases, n_val = cfg.val_cases, n_test = cfg.test_cases;
    if (n_train + n_val + n_test == 0) {
        n_train = static_cast<std::int64_t>(std::llround(0.7 * static_cast<double>(cfg.n_cases)));
        n_val = static_cast<std::int64_t>(std::llround(0.1 * static_cast<double>(cfg.n_cases)));
        n_test = cfg.n_cases - n_train - n_val;
    }

    // label-stratified assignment: shuffle within each label, then allocate
    // proportionally (largest remainder goes to test)
    std::vector<std::size_t> mal_idx, ben_idx;
    for (std::size_t i = 0; i < n; ++i)
        (cases[i].case_label == Label::malignant ? mal_idx : ben_idx).push_back(i);
    Rng split_rng = rng.fork(117);
    split_rng.shuffle(mal_idx);
    split_rng.shuffle(ben_idx);

    const double total = static_cast<double>(cfg.n_cases);
    auto take = [&](std::vector<std::size_t>& pool, std::int64_t count) {
        std::vector<std::size_t> out;
        for (std::int64_t i = 0; i < count && !pool.empty(); ++i) {
            out.push_back(pool.back());
            pool.pop_back();
        }
        return out;
    };
    const auto mal_total = static_cast<std::int64_t>(mal_idx.size());
    std::int64_t mal_train = std::llround(static_cast<double>(n_train) / total *
                                          static_cast<double>(mal_total));
    std::int64_t mal_val = std::llround(static_cast<double>(n_val) / total *
                                        static_cast<double>(mal_total));
    mal_train = std::min(mal_train, mal_total);
    mal_val = std::min(mal_val, mal_total - mal_train);

    SyntheticDataset ds;
    auto move_out = [&](const std::vector<std::size_t>& ids, std::vector<CaseRecord>& dst) {
        for (auto i : ids) dst.push_back(std::move(cases[i]));
    };
    move_out(take(mal_idx, mal_train), ds.train);
    move_out(take(ben_idx, n_train - mal_train), ds.train);
    move_out(take(mal_idx, mal_val), ds.val);
    move_out(take(ben_idx, n_val - static_cast<std::int64_t>(ds.val.size())), ds.val);
    move_out(take(mal_idx, static_cast<std::int64_t>(mal_idx.size())), ds.test);
    move_out(take(ben_idx, static_cast<std::int64_t>(ben_idx.size())), ds.test);

    auto by_id = [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; };
    std::sort(ds.train.begin(), ds.train.end(), by_id);
    std::sort(ds.val.begin(), ds.val.end(), by_id);
    std::sort(ds.test.begin(), ds.test.end(), by_id);
    return ds;
}

}  // namespace mammil
