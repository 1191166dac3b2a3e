#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mammil/errors.hpp"
#include "mammil/manifest.hpp"
#include "mammil/preprocess.hpp"
#include "mammil/synthetic.hpp"

using namespace mammil;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("mammil_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Grid quantized(Grid g) {
    for (auto& v : g.v) v = std::round(v * 255.0) / 255.0;
    return g;
}

CaseRecord small_case(const std::string& id, Label label) {
    CaseRecord c;
    c.case_id = id;
    c.case_label = label;
    Rng rng(99);
    for (auto [side, view] : {std::pair{Side::L, View::CC}, {Side::L, View::MLO}}) {
        ImageRecord img;
        img.side = side;
        img.view = view;
        img.pixels = Grid(20, 16);
        for (auto& v : img.pixels.v) v = rng.uniform(0.0, 1.0);
        img.pixels = quantized(img.pixels);
        img.image_label = label;
        if (label == Label::malignant)
            img.roi_boxes.push_back(RoiBox{2, 3, 6, 8, RoiKind::mass, Label::malignant});
        c.images.push_back(std::move(img));
    }
    return c;
}

}  // namespace

TEST_CASE("manifest round trip preserves every field bit-exactly") {
    const auto dir = temp_dir("roundtrip");
    std::vector<CaseRecord> cases{small_case("c1", Label::malignant),
                                  small_case("c2", Label::benign)};
    const std::string manifest = (dir / "manifest.csv").string();
    write_manifest(cases, manifest, "images");
    const auto loaded = load_manifest(manifest);
    REQUIRE(loaded.size() == cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        CHECK(loaded[i].case_id == cases[i].case_id);
        CHECK(loaded[i].case_label == cases[i].case_label);
        REQUIRE(loaded[i].images.size() == cases[i].images.size());
        for (std::size_t j = 0; j < cases[i].images.size(); ++j) {
            const auto& a = loaded[i].images[j];
            const auto& b = cases[i].images[j];
            CHECK(a.side == b.side);
            CHECK(a.view == b.view);
            CHECK(a.image_label == b.image_label);
            CHECK(a.pixels.v == b.pixels.v);
            REQUIRE(a.roi_boxes.size() == b.roi_boxes.size());
            for (std::size_t r = 0; r < a.roi_boxes.size(); ++r) {
                CHECK(a.roi_boxes[r].x0 == b.roi_boxes[r].x0);
                CHECK(a.roi_boxes[r].y1 == b.roi_boxes[r].y1);
                CHECK(a.roi_boxes[r].kind == b.roi_boxes[r].kind);
                CHECK(a.roi_boxes[r].label == b.roi_boxes[r].label);
            }
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest assembles rows of one case and errors carry line numbers") {
    const auto dir = temp_dir("manifest_err");
    write_pgm((dir / "img.pgm").string(), Grid(4, 4, 0.5));

    SUBCASE("two rows assemble into one two-image case") {
        std::ofstream os(dir / "m.csv");
        os << "case_id,side,view,path,case_label,image_label,roi_boxes\n";
        os << "c1,L,CC,img.pgm,benign,,\n";
        os << "c1,L,MLO,img.pgm,benign,,\n";
        os.close();
        const auto cases = load_manifest((dir / "m.csv").string());
        REQUIRE(cases.size() == 1);
        CHECK(cases[0].images.size() == 2);
        CHECK(case_group_of(cases[0]).base == CaseGroupBase::multi_one_side);
    }
    SUBCASE("unknown view token names the line") {
        std::ofstream os(dir / "m.csv");
        os << "case_id,side,view,path,case_label,image_label,roi_boxes\n";
        os << "c1,L,BOGUS,img.pgm,benign,,\n";
        os.close();
        CHECK_THROWS_WITH_AS(load_manifest((dir / "m.csv").string()), doctest::Contains("line 2"),
                             DataError);
    }
    SUBCASE("duplicate (case, side, view) is rejected") {
        std::ofstream os(dir / "m.csv");
        os << "case_id,side,view,path,case_label,image_label,roi_boxes\n";
        os << "c1,L,CC,img.pgm,benign,,\n";
        os << "c1,L,CC,img.pgm,benign,,\n";
        os.close();
        CHECK_THROWS_WITH_AS(load_manifest((dir / "m.csv").string()), doctest::Contains("duplicate"),
                             DataError);
    }
    SUBCASE("malignant case with all-benign image labels violates the invariant") {
        std::ofstream os(dir / "m.csv");
        os << "case_id,side,view,path,case_label,image_label,roi_boxes\n";
        os << "c1,L,CC,img.pgm,malignant,benign,\n";
        os.close();
        CHECK_THROWS_AS(load_manifest((dir / "m.csv").string()), DataError);
    }
    SUBCASE("header-only manifest yields an empty list") {
        std::ofstream os(dir / "m.csv");
        os << "case_id,side,view,path,case_label,image_label,roi_boxes\n";
        os.close();
        CHECK(load_manifest((dir / "m.csv").string()).empty());
    }
    fs::remove_all(dir);
}

TEST_CASE("preprocess crops to the bright region's bounding box") {
    Grid raw(20, 30, 0.0);
    for (std::int64_t r = 5; r < 11; ++r)
        for (std::int64_t c = 8; c < 17; ++c) raw.at(r, c) = 0.8;
    const auto res = preprocess_image(raw, 12, 18, Side::L);
    CHECK(res.transform.crop_x0 == 8);
    CHECK(res.transform.crop_y0 == 5);
    CHECK(res.transform.crop_w == 9);
    CHECK(res.transform.crop_h == 6);
    CHECK(res.pixels.h == 12);
    CHECK(res.pixels.w == 18);
    for (double v : res.pixels.v) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("right-side images are mirrored before padding") {
    // a lone bright pixel at the left edge of the crop lands at the right
    // edge after the R flip
    Grid raw(5, 7, 0.0);
    raw.at(2, 1) = 1.0;
    raw.at(2, 5) = 0.5;  // second blob fixes the crop window
    const auto res = preprocess_image(raw, 5, 5, Side::R);
    CHECK(res.transform.flipped);
    RoiBox box{1, 2, 2, 3, RoiKind::mass, Label::benign};  // the bright pixel
    RoiBox mapped;
    REQUIRE(map_roi_box(box, res.transform, mapped));
    // crop is x in [1,6), flip within width 5 puts x0 at 5-1-... right end
    CHECK(mapped.x1 == res.transform.out_w);
}

TEST_CASE("all-zero input has no foreground") {
    CHECK_THROWS_WITH_AS(preprocess_image(Grid(8, 8, 0.0), 8, 8, Side::L),
                         doctest::Contains("no foreground"), DataError);
}

TEST_CASE("preprocess is idempotent up to interpolation") {
    // content already at the target aspect: the second pass crops the full
    // frame and resizing is near-identity
    Grid raw(40, 30, 0.0);
    for (std::int64_t r = 0; r < 40; ++r)
        for (std::int64_t c = 0; c < 30; ++c) raw.at(r, c) = 0.3 + 0.4 * ((r + c) % 7) / 7.0;
    const auto once = preprocess_image(raw, 40, 30, Side::L);
    const auto twice = preprocess_image(once.pixels, 40, 30, Side::L);
    CHECK(twice.transform.crop_w == 30);
    CHECK(twice.transform.crop_h == 40);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < once.pixels.v.size(); ++i)
        max_diff = std::max(max_diff, std::fabs(once.pixels.v[i] - twice.pixels.v[i]));
    CHECK(max_diff < 1e-9);
}

TEST_CASE("pgm 16-bit round trip") {
    const auto dir = temp_dir("pgm16");
    Grid g(3, 4);
    Rng rng(3);
    for (auto& v : g.v) v = std::round(rng.uniform() * 65535.0) / 65535.0;
    write_pgm((dir / "img16.pgm").string(), g, 65535);
    const Grid back = read_pgm((dir / "img16.pgm").string());
    for (std::size_t i = 0; i < g.v.size(); ++i)
        CHECK(back.v[i] == doctest::Approx(g.v[i]).epsilon(1e-12));
    fs::remove_all(dir);
}

TEST_CASE("case groups follow the image combination") {
    auto make = [](std::vector<std::pair<Side, View>> svs) {
        CaseRecord c;
        c.case_id = "g";
        for (auto [s, v] : svs) {
            ImageRecord img;
            img.side = s;
            img.view = v;
            img.pixels = Grid(4, 4, 0.5);
            c.images.push_back(img);
        }
        return c;
    };
    const auto g1 = case_group_of(make({{Side::L, View::CC}}));
    CHECK(g1.base == CaseGroupBase::single);
    CHECK(g1.std_views);
    CHECK(!g1.four_std);

    const auto g2 = case_group_of(make(
        {{Side::L, View::CC}, {Side::L, View::MLO}, {Side::R, View::CC}, {Side::R, View::MLO}}));
    CHECK(g2.base == CaseGroupBase::multi_both);
    CHECK(g2.four_std);
    CHECK(g2.std_views);

    const auto g3 = case_group_of(make({{Side::R, View::CC},
                                        {Side::R, View::MLO},
                                        {Side::R, View::XCCL},
                                        {Side::L, View::CC},
                                        {Side::L, View::MLO}}));
    CHECK(g3.base == CaseGroupBase::multi_both);
    CHECK(g3.mixed);
    CHECK(!g3.four_std);

    CHECK(case_group_of(make({{Side::L, View::CC}, {Side::R, View::MLO}})).base ==
          CaseGroupBase::one_each_side);
    CHECK(case_group_of(make({{Side::R, View::CC}, {Side::R, View::MLO}})).base ==
          CaseGroupBase::multi_one_side);
}

TEST_CASE("group_batches keeps view combinations homogeneous") {
    auto case_with = [](const std::string& id, std::vector<std::pair<Side, View>> svs) {
        CaseRecord c;
        c.case_id = id;
        for (auto [s, v] : svs) {
            ImageRecord img;
            img.side = s;
            img.view = v;
            img.pixels = Grid(4, 4, 0.5);
            c.images.push_back(img);
        }
        return c;
    };
    std::vector<CaseRecord> cases;
    cases.push_back(case_with("A", {{Side::L, View::CC}, {Side::L, View::MLO}}));
    cases.push_back(case_with("B", {{Side::L, View::CC}, {Side::L, View::MLO}}));
    cases.push_back(case_with("C", {{Side::L, View::CC}}));

    const auto batches = group_batches(cases, 2);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0] == std::vector<std::size_t>{0, 1});
    CHECK(batches[1] == std::vector<std::size_t>{2});

    CHECK(group_batches({}, 4).empty());

    // property: union of batches equals the input multiset and batches are
    // homogeneous, with or without shuffling
    Rng rng(31);
    const auto shuffled = group_batches(cases, 2, rng);
    std::multiset<std::size_t> seen;
    for (const auto& b : shuffled) {
        REQUIRE(!b.empty());
        const std::string key = view_combination_key(cases[b[0]]);
        for (auto i : b) {
            CHECK(view_combination_key(cases[i]) == key);
            seen.insert(i);
        }
    }
    CHECK(seen == std::multiset<std::size_t>{0, 1, 2});
}

TEST_CASE("synthetic generation is deterministic and honors its contracts") {
    SyntheticConfig cfg;
    cfg.n_cases = 60;
    cfg.malignant_fraction = 0.5;
    cfg.image_height = 32;
    cfg.image_width = 24;
    cfg.seed = 12345;
    cfg.view_count_distribution = {0.2, 0.2, 0.2, 0.3, 0.1};

    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    auto flatten = [](const SyntheticDataset& ds) {
        std::vector<const CaseRecord*> out;
        for (const auto* split : {&ds.train, &ds.val, &ds.test})
            for (const auto& c : *split) out.push_back(&c);
        return out;
    };
    const auto fa = flatten(a), fb = flatten(b);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i]->case_id == fb[i]->case_id);
        CHECK(fa[i]->case_label == fb[i]->case_label);
        REQUIRE(fa[i]->images.size() == fb[i]->images.size());
        for (std::size_t j = 0; j < fa[i]->images.size(); ++j)
            CHECK(fa[i]->images[j].pixels.v == fb[i]->images[j].pixels.v);
    }

    // malignant cases carry a malignant box somewhere; benign never do
    for (const auto* c : fa) {
        bool has_malignant_box = false;
        for (const auto& img : c->images)
            for (const auto& box : img.roi_boxes)
                has_malignant_box = has_malignant_box || box.label == Label::malignant;
        if (c->case_label == Label::malignant)
            CHECK(has_malignant_box);
        else
            CHECK(!has_malignant_box);
    }

    // no case id spans two splits
    std::set<std::string> train_ids, other_ids;
    for (const auto& c : a.train) train_ids.insert(c.case_id);
    for (const auto& c : a.val) other_ids.insert(c.case_id);
    for (const auto& c : a.test) other_ids.insert(c.case_id);
    for (const auto& id : train_ids) CHECK(other_ids.count(id) == 0);

    // stratification within one case per split
    auto mal_count = [](const std::vector<CaseRecord>& cs) {
        std::int64_t n = 0;
        for (const auto& c : cs) n += c.case_label == Label::malignant ? 1 : 0;
        return n;
    };
    const double frac = 0.5;
    CHECK(std::abs(mal_count(a.train) - frac * static_cast<double>(a.train.size())) <= 1.0);
    CHECK(std::abs(mal_count(a.val) - frac * static_cast<double>(a.val.size())) <= 1.0);
    CHECK(std::abs(mal_count(a.test) - frac * static_cast<double>(a.test.size())) <= 1.0);
}

TEST_CASE("synthetic 4-std-only distribution produces only standard four-image cases") {
    SyntheticConfig cfg;
    cfg.n_cases = 12;
    cfg.image_height = 32;
    cfg.image_width = 24;
    cfg.seed = 5;
    cfg.view_count_distribution = {0, 0, 0, 1.0, 0};
    const auto ds = generate_synthetic(cfg);
    for (const auto* split : {&ds.train, &ds.val, &ds.test})
        for (const auto& c : *split) CHECK(case_group_of(c).four_std);
}

TEST_CASE("synthetic config validation") {
    SyntheticConfig cfg;
    cfg.view_count_distribution = {0.5, 0.1, 0, 0, 0};  // mass 0.6
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg.view_count_distribution = {0, 0, 0, 1.0, 0};
    cfg.malignant_fraction = 1.5;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg.malignant_fraction = 0.3;
    cfg.train_cases = 5;  // explicit splits must cover n_cases
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("explicit split sizes are honored") {
    SyntheticConfig cfg;
    cfg.n_cases = 50;
    cfg.image_height = 32;
    cfg.image_width = 24;
    cfg.seed = 8;
    cfg.train_cases = 30;
    cfg.val_cases = 8;
    cfg.test_cases = 12;
    const auto ds = generate_synthetic(cfg);
    CHECK(ds.train.size() == 30);
    CHECK(ds.val.size() == 8);
    CHECK(ds.test.size() == 12);
}

TEST_CASE("groundtruth boxes survive preprocessing in model space") {
    SyntheticConfig cfg;
    cfg.n_cases = 10;
    cfg.malignant_fraction = 0.5;
    cfg.image_height = 48;
    cfg.image_width = 36;
    cfg.seed = 21;
    auto ds = generate_synthetic(cfg);
    preprocess_cases(ds.train, 48, 36);
    bool any_malignant_box = false;
    for (const auto& c : ds.train) {
        for (const auto& img : c.images) {
            CHECK(img.pixels.h == 48);
            CHECK(img.pixels.w == 36);
            for (const auto& box : img.roi_boxes) {
                CHECK(box.valid_within(48, 36));
                any_malignant_box = any_malignant_box || box.label == Label::malignant;
            }
        }
    }
    CHECK(any_malignant_box);
}
