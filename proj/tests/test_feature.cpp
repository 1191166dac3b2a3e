#include <doctest.h>

#include <set>

#include "mammil/gradcheck.hpp"
#include "mammil/model.hpp"

using namespace mammil;

namespace {

ModelConfig tiny_config(const std::string& spec = "es-att-side") {
    ModelConfig mc;
    mc.net.channels_per_stage = {4, 6};
    mc.net.embed_dim = 6;
    mc.image_h = 16;
    mc.image_w = 12;
    mc.t_fraction = 0.05;
    mc.k = 2;
    mc.patch_h = 8;
    mc.patch_w = 8;
    mc.attention_hidden = 5;
    mc.pooling = parse_pooling_spec(spec);
    mc.init_seed = 77;
    return mc;
}

ImageRecord image_of(Grid g, Side side = Side::L, View view = View::CC) {
    ImageRecord img;
    img.side = side;
    img.view = view;
    img.pixels = std::move(g);
    return img;
}

Grid random_grid(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    Grid g(h, w);
    Rng rng(seed);
    for (auto& v : g.v) v = rng.uniform(0.0, 1.0);
    return g;
}

}  // namespace

TEST_CASE("stride-2 stages reduce 64x48 to 8x6 over three stages") {
    CHECK(staged_extent(64, 3) == 8);
    CHECK(staged_extent(48, 3) == 6);
    ModelConfig mc;
    mc.image_h = 64;
    mc.image_w = 48;
    mc.pooling = parse_pooling_spec("is-mean");
    CaseModel model(mc);
    CHECK(model.sal_h() == 8);
    CHECK(model.sal_w() == 6);
}

TEST_CASE("t fraction of 2 percent on an 8x6 map keeps a single value") {
    CHECK(topt_count(0.02, 8, 6) == 1);
    CHECK(topt_count(0.05, 8, 6) == 2);
    CHECK(topt_count(1.0, 8, 6) == 48);
}

TEST_CASE("zero image with zero biases pools to zero") {
    CaseModel model(tiny_config());
    // biases start at zero, so a zero image stays zero through conv+relu;
    // the pooled global features are the leading entries of h_fusion
    const auto bundle = model.image_forward(image_of(Grid(16, 12, 0.0)));
    for (std::int64_t i = 0; i < 6; ++i) CHECK(bundle.h_fusion.data()[i] == 0.0);
}

TEST_CASE("saliency values live strictly inside (0,1)") {
    CaseModel model(tiny_config());
    const auto bundle = model.image_forward(image_of(random_grid(16, 12, 4)));
    for (double v : bundle.saliency.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // h_topt holds the largest saliency values in descending order
    REQUIRE(bundle.h_topt.numel() == 1);
    double mx = 0.0;
    for (double v : bundle.saliency.data()) mx = std::max(mx, v);
    CHECK(bundle.h_topt.data()[0] == doctest::Approx(mx).epsilon(1e-15));
}

TEST_CASE("retrieve_roi follows the greedy suppression rule") {
    SUBCASE("a single bright peak wins and the box covers it") {
        Grid image = random_grid(16, 12, 9);
        std::vector<double> sal(4 * 3, 0.1);
        sal[7] = 0.9;  // row 2, col 1 of a 4x3 map
        const auto cands = retrieve_roi(image, sal, 4, 3, 1, 8, 8);
        REQUIRE(cands.size() == 1);
        // peak at saliency (2,1) -> image y in [8,12), x in [4,8)
        CHECK(cands[0].box.y0 <= 8);
        CHECK(cands[0].box.y1 >= 12);
        CHECK(cands[0].box.x0 <= 4);
        CHECK(cands[0].box.x1 >= 8);
    }
    SUBCASE("uniform saliency picks flat-index order, never the same window twice") {
        Grid image = random_grid(16, 16, 10);
        std::vector<double> sal(16, 0.5);  // 4x4 map, window 1x1
        const auto cands = retrieve_roi(image, sal, 4, 4, 2, 8, 8);
        REQUIRE(cands.size() == 2);
        CHECK(cands[0].box.x0 == 0);
        CHECK(cands[0].box.y0 == 0);
        // second pick is the next flat position (0,1)
        CHECK(cands[1].box.y0 == 0);
        CHECK(cands[1].box.x0 == 4);
    }
    SUBCASE("six candidates per image, pairwise distinct, within bounds") {
        Grid image = random_grid(64, 48, 11);
        std::vector<double> sal;
        Rng rng(12);
        for (int i = 0; i < 8 * 6; ++i) sal.push_back(rng.uniform());
        const auto cands = retrieve_roi(image, sal, 8, 6, 6, 16, 16);
        REQUIRE(cands.size() == 6);
        std::set<std::tuple<std::int64_t, std::int64_t>> seen;
        for (const auto& c : cands) {
            CHECK(c.box.valid_within(64, 48));
            CHECK(seen.insert({c.box.x0, c.box.y0}).second);
            CHECK(c.crop.h == 16);
            CHECK(c.crop.w == 16);
        }
    }
    SUBCASE("k below one is rejected") {
        Grid image = random_grid(16, 12, 13);
        std::vector<double> sal(12, 0.5);
        CHECK_THROWS_AS(retrieve_roi(image, sal, 4, 3, 0, 8, 8), TensorError);
    }
}

TEST_CASE("patch attention is a distribution and singletons get weight one") {
    SUBCASE("k = 1") {
        auto mc = tiny_config();
        mc.k = 1;
        CaseModel model(mc);
        const auto bundle = model.image_forward(image_of(random_grid(16, 12, 14)));
        REQUIRE(bundle.patches.size() == 1);
        CHECK(bundle.patches[0].attention == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("identical patches share attention uniformly") {
        CaseModel model(tiny_config());
        const ImageRecord img = image_of(random_grid(16, 12, 15));
        const std::vector<RoiBox> same_box(2, RoiBox{0, 0, 8, 8, RoiKind::mass, Label::benign});
        const auto bundle = model.image_forward(img, &same_box);
        REQUIRE(bundle.patches.size() == 2);
        CHECK(bundle.patches[0].attention == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(bundle.patches[1].attention == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("attentions sum to one") {
        CaseModel model(tiny_config());
        const auto bundle = model.image_forward(image_of(random_grid(16, 12, 16)));
        double acc = 0.0;
        for (const auto& p : bundle.patches) {
            CHECK(p.attention >= 0.0);
            acc += p.attention;
        }
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("fusion concatenates global then local and slices back bit-exactly") {
    CaseModel model(tiny_config());
    const auto bundle = model.image_forward(image_of(random_grid(16, 12, 17)));
    CHECK(bundle.h_fusion.numel() == 6 + 6);
    const Tensor head = narrow(bundle.h_fusion, 0, 0, 6);
    const Tensor tail = narrow(bundle.h_fusion, 0, 6, 6);
    CHECK(tail.data() == bundle.h_local.data());
    // leading part is the spatial max of the global feature map, nonnegative
    // after relu
    for (double v : head.data()) CHECK(v >= 0.0);
}

TEST_CASE("per-image pipeline passes grad_check with frozen boxes") {
    CaseModel model(tiny_config("es-mean"));
    const ImageRecord img = image_of(random_grid(16, 12, 18));
    const auto probe = model.image_forward(img);
    std::vector<RoiBox> boxes;
    for (const auto& c : probe.patches) boxes.push_back(c.box);

    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    auto f = [&]() {
        const auto bundle = model.image_forward(img, &boxes);
        return add(sum(mul(bundle.h_fusion, bundle.h_fusion)), sum(abs(bundle.saliency)));
    };
    CHECK(grad_check_params(f, params, 1e-5) < 1e-4);
}

TEST_CASE("saliency L1 equals the plain sum of saliency values") {
    CaseModel model(tiny_config());
    const auto bundle = model.image_forward(image_of(random_grid(16, 12, 19)));
    CHECK(sum(abs(bundle.saliency)).item() ==
          doctest::Approx(sum(bundle.saliency).item()).epsilon(1e-15));
}
