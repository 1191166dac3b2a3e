#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mammil/snapshot.hpp"
#include "mammil/trainer.hpp"

using namespace mammil;

namespace {

ModelConfig tiny_config(const std::string& spec) {
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
    mc.init_seed = 2024;
    return mc;
}

CaseRecord make_case(const std::string& id, Label label,
                     std::vector<std::pair<Side, View>> svs, std::uint64_t seed) {
    CaseRecord c;
    c.case_id = id;
    c.case_label = label;
    Rng rng(seed);
    for (auto [s, v] : svs) {
        ImageRecord img;
        img.side = s;
        img.view = v;
        img.pixels = Grid(16, 12);
        for (auto& val : img.pixels.v) val = rng.uniform(0.0, 1.0);
        if (label == Label::malignant && s == Side::L)
            for (std::int64_t r = 4; r < 9; ++r)
                for (std::int64_t cc = 3; cc < 8; ++cc) img.pixels.at(r, cc) = 0.95;
        img.image_label = label == Label::malignant && s == Side::L ? Label::malignant
                                                                    : Label::benign;
        c.images.push_back(std::move(img));
    }
    return c;
}

CaseRecord four_std_case(const std::string& id, Label label, std::uint64_t seed) {
    return make_case(id, label,
                     {{Side::L, View::CC}, {Side::L, View::MLO}, {Side::R, View::CC},
                      {Side::R, View::MLO}},
                     seed);
}

std::vector<double> flatten_params(const CaseModel& model, const std::string& component) {
    std::vector<double> out;
    for (const auto& p : model.parameters())
        if (component.empty() || p.component == component)
            out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

}  // namespace

TEST_CASE("case_loss matches hand values") {
    LossConfig cfg;
    cfg.beta = 0.0;
    cfg.pos_weight = 1.0;
    CaseHeads heads;
    heads.y_topt = Tensor::scalar(0.5);
    heads.y_local = Tensor::scalar(0.5);
    heads.y_fusion = Tensor::scalar(0.5);

    SUBCASE("three heads at one half cost 3 ln 2") {
        Tensor l = case_loss(Label::malignant, heads, {}, cfg);
        CHECK(l.item() == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-9));
    }
    SUBCASE("saliency L1 term adds beta times the mass") {
        cfg.beta = 1.0;
        const std::vector<Tensor> maps{Tensor::full({2, 2}, 0.5)};
        Tensor l = case_loss(Label::benign, heads, maps, cfg);
        CHECK(l.item() == doctest::Approx(3.0 * std::log(2.0) + 2.0).epsilon(1e-9));
    }
    SUBCASE("perfect heads cost next to nothing") {
        heads.y_topt = Tensor::scalar(1.0);
        heads.y_local = Tensor::scalar(1.0);
        heads.y_fusion = Tensor::scalar(1.0);
        Tensor l = case_loss(Label::malignant, heads, {}, cfg);
        CHECK(l.item() < 1e-5);
        CHECK(l.item() >= 0.0);
    }
    SUBCASE("pos_weight scales only the malignant term") {
        cfg.pos_weight = 3.0;
        Tensor lm = case_loss(Label::malignant, heads, {}, cfg);
        CHECK(lm.item() == doctest::Approx(9.0 * std::log(2.0)).epsilon(1e-9));
        Tensor lb = case_loss(Label::benign, heads, {}, cfg);
        CHECK(lb.item() == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-9));
    }
}

TEST_CASE("auto pos_weight is the benign to malignant ratio") {
    std::vector<CaseRecord> split;
    for (int i = 0; i < 30; ++i)
        split.push_back(make_case("m" + std::to_string(i), Label::malignant,
                                  {{Side::L, View::CC}}, 100 + i));
    for (int i = 0; i < 90; ++i)
        split.push_back(make_case("b" + std::to_string(i), Label::benign,
                                  {{Side::L, View::CC}}, 200 + i));
    CHECK(auto_pos_weight(split) == 3.0);
}

TEST_CASE("adam follows the hand oracle on the first step") {
    // p=0, g=1, lr=0.1: m_hat=1, v_hat=1, update = -0.1/(1+1e-8)
    std::vector<Parameter> params{{"p", "heads", Tensor::zeros({1}, true)}};
    params[0].tensor.grad_buffer()[0] = 1.0;
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    Optimizer opt(params, cfg);
    opt.step();
    CHECK(params[0].tensor.data()[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam moves parameters on zero gradient when moments are warm") {
    std::vector<Parameter> params{{"p", "heads", Tensor::zeros({1}, true)}};
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    Optimizer opt(params, cfg);
    params[0].tensor.grad_buffer()[0] = 1.0;
    opt.step();
    const double after_first = params[0].tensor.data()[0];
    params[0].tensor.zero_grad();  // g = 0, moments remain
    opt.step();
    CHECK(params[0].tensor.data()[0] != after_first);
}

TEST_CASE("plain sgd update") {
    std::vector<Parameter> params{{"p", "heads", Tensor::full({1}, 1.0, true)}};
    params[0].tensor.grad_buffer()[0] = 2.0;
    OptimConfig cfg;
    cfg.kind = OptimKind::sgd;
    cfg.lr = 0.5;
    cfg.weight_decay = 0.0;
    Optimizer opt(params, cfg);
    opt.step();
    CHECK(params[0].tensor.data()[0] == 0.0);
}

TEST_CASE("participating components follow the group table") {
    const PoolingSpec side_spec = parse_pooling_spec("es-att-side");
    const PoolingSpec img_spec = parse_pooling_spec("es-att");
    const std::vector<std::string> existing{kCompGlobal, kCompLocal, kCompHeads, kCompViewAtt,
                                            kCompSideAtt};
    const std::vector<std::string> existing_img{kCompGlobal, kCompLocal, kCompHeads, kCompImageAtt};

    const auto single = make_case("s", Label::benign, {{Side::L, View::CC}}, 1);
    const auto one_side =
        make_case("os", Label::benign, {{Side::L, View::CC}, {Side::L, View::MLO}}, 2);
    const auto one_each =
        make_case("oe", Label::benign, {{Side::L, View::CC}, {Side::R, View::CC}}, 3);
    const auto full = four_std_case("f", Label::benign, 4);

    auto parts = participating_components(single, side_spec, existing);
    CHECK(!parts.count(kCompViewAtt));
    CHECK(!parts.count(kCompSideAtt));
    CHECK(parts.count(kCompGlobal));
    CHECK(parts.count(kCompHeads));

    parts = participating_components(one_side, side_spec, existing);
    CHECK(parts.count(kCompViewAtt));
    CHECK(!parts.count(kCompSideAtt));

    parts = participating_components(one_each, side_spec, existing);
    CHECK(!parts.count(kCompViewAtt));
    CHECK(parts.count(kCompSideAtt));

    parts = participating_components(full, side_spec, existing);
    CHECK(parts.count(kCompViewAtt));
    CHECK(parts.count(kCompSideAtt));

    CHECK(!participating_components(single, img_spec, existing_img).count(kCompImageAtt));
    CHECK(participating_components(one_side, img_spec, existing_img).count(kCompImageAtt));
}

TEST_CASE("dynamic step restores unused attention, default training drifts it") {
    for (bool dynamic : {true, false}) {
        CaseModel model(tiny_config("es-att-side"));
        OptimConfig ocfg;
        ocfg.lr = 1e-3;
        ocfg.weight_decay = 1e-4;
        Optimizer opt(model.parameters(), ocfg);
        ComponentRegistry registry(model.parameters());
        SnapshotStore snaps(registry, model.parameters(), opt);
        LossConfig lcfg;
        lcfg.beta = 1e-3;
        lcfg.pos_weight = 1.0;

        // warm the attention moments with a full 4-std batch first
        const auto warm = four_std_case("warm", Label::malignant, 900);
        std::vector<const CaseRecord*> warm_batch{&warm};
        if (dynamic)
            dynamic_step(model, opt, lcfg, warm_batch, snaps);
        else
            default_step(model, opt, lcfg, warm_batch);

        const auto view_before = flatten_params(model, kCompViewAtt);
        const auto side_before = flatten_params(model, kCompSideAtt);

        const auto single = make_case("single", Label::benign, {{Side::L, View::CC}}, 901);
        std::vector<const CaseRecord*> batch{&single};
        if (dynamic)
            dynamic_step(model, opt, lcfg, batch, snaps);
        else
            default_step(model, opt, lcfg, batch);

        const auto view_after = flatten_params(model, kCompViewAtt);
        const auto side_after = flatten_params(model, kCompSideAtt);
        if (dynamic) {
            CHECK(view_after == view_before);  // bit-exact restore
            CHECK(side_after == side_before);
        } else {
            CHECK(view_after != view_before);  // moment decay + weight decay drift
            CHECK(side_after != side_before);
        }
        // feature nets always learn
        CHECK(flatten_params(model, kCompGlobal) != std::vector<double>{});
    }
}

TEST_CASE("a component that never participates stays at its step-zero state") {
    CaseModel model(tiny_config("es-att-side"));
    OptimConfig ocfg;
    ocfg.lr = 1e-3;
    ocfg.weight_decay = 1e-4;
    Optimizer opt(model.parameters(), ocfg);
    ComponentRegistry registry(model.parameters());
    SnapshotStore snaps(registry, model.parameters(), opt);
    LossConfig lcfg;
    lcfg.beta = 1e-3;
    lcfg.pos_weight = 1.0;

    const auto view0 = flatten_params(model, kCompViewAtt);
    const auto side0 = flatten_params(model, kCompSideAtt);
    const auto global0 = flatten_params(model, kCompGlobal);
    // an epoch of single-image bags: the attention components never take part
    for (int step = 0; step < 5; ++step) {
        const auto c = make_case("e" + std::to_string(step),
                                 step % 2 ? Label::malignant : Label::benign,
                                 {{Side::L, View::CC}}, static_cast<std::uint64_t>(500 + step));
        std::vector<const CaseRecord*> batch{&c};
        dynamic_step(model, opt, lcfg, batch, snaps);
    }
    CHECK(flatten_params(model, kCompViewAtt) == view0);   // restore-then-step == never-stepped
    CHECK(flatten_params(model, kCompSideAtt) == side0);
    CHECK(flatten_params(model, kCompGlobal) != global0);  // the nets did learn
}

TEST_CASE("dynamic equals default bit-exactly on all-participating batches") {
    CaseModel a(tiny_config("es-att-side"));
    CaseModel b(tiny_config("es-att-side"));
    OptimConfig ocfg;
    ocfg.lr = 1e-3;
    Optimizer opt_a(a.parameters(), ocfg);
    Optimizer opt_b(b.parameters(), ocfg);
    ComponentRegistry reg_a(a.parameters());
    SnapshotStore snaps(reg_a, a.parameters(), opt_a);
    LossConfig lcfg;
    lcfg.beta = 1e-3;
    lcfg.pos_weight = 1.0;

    for (int step = 0; step < 3; ++step) {
        const auto c = four_std_case("c" + std::to_string(step),
                                     step % 2 ? Label::benign : Label::malignant,
                                     1000 + static_cast<std::uint64_t>(step));
        std::vector<const CaseRecord*> batch{&c};
        dynamic_step(a, opt_a, lcfg, batch, snaps);
        default_step(b, opt_b, lcfg, batch);
    }
    CHECK(flatten_params(a, "") == flatten_params(b, ""));
}

TEST_CASE("dynamic step rejects mixed batches") {
    CaseModel model(tiny_config("es-att-side"));
    Optimizer opt(model.parameters(), OptimConfig{});
    ComponentRegistry registry(model.parameters());
    SnapshotStore snaps(registry, model.parameters(), opt);
    const auto a = make_case("a", Label::benign, {{Side::L, View::CC}}, 1);
    const auto b = four_std_case("b", Label::benign, 2);
    std::vector<const CaseRecord*> batch{&a, &b};
    CHECK_THROWS_WITH_AS(dynamic_step(model, opt, LossConfig{}, batch, snaps),
                         doctest::Contains("homogeneous"), DataError);
}

TEST_CASE("training is deterministic and early stopping honors patience") {
    std::vector<CaseRecord> train_split, val_split;
    for (int i = 0; i < 6; ++i)
        train_split.push_back(four_std_case("t" + std::to_string(i),
                                            i % 2 ? Label::malignant : Label::benign,
                                            static_cast<std::uint64_t>(3000 + i)));
    for (int i = 0; i < 4; ++i)
        val_split.push_back(four_std_case("v" + std::to_string(i),
                                          i % 2 ? Label::malignant : Label::benign,
                                          static_cast<std::uint64_t>(4000 + i)));

    TrainConfig cfg;
    cfg.optim.lr = 1e-3;
    cfg.batch_size = 2;
    cfg.max_epochs = 3;
    cfg.patience = 10;
    cfg.scheme = TrainScheme::dynamic;
    cfg.shuffle_seed = 9;

    CaseModel m1(tiny_config("es-att-side"));
    CaseModel m2(tiny_config("es-att-side"));
    std::ostringstream log1, log2;
    const auto r1 = train(m1, train_split, val_split, cfg, &log1);
    const auto r2 = train(m2, train_split, val_split, cfg, &log2);
    CHECK(log1.str() == log2.str());
    REQUIRE(r1.best_params.size() == r2.best_params.size());
    for (std::size_t i = 0; i < r1.best_params.size(); ++i)
        CHECK(r1.best_params[i].tensor.data() == r2.best_params[i].tensor.data());
    CHECK(log1.str().find("epoch=1 split=train loss=") != std::string::npos);
    CHECK(log1.str().find("split=val") != std::string::npos);

    SUBCASE("patience zero stops right after the first non-improving epoch") {
        TrainConfig eager = cfg;
        eager.patience = 0;
        eager.max_epochs = 8;
        CaseModel m3(tiny_config("es-att-side"));
        const auto r3 = train(m3, train_split, val_split, eager);
        const auto last_epoch = r3.log.back().epoch;
        const bool stopped_early = last_epoch < eager.max_epochs;
        if (stopped_early) CHECK(last_epoch == r3.best_epoch + 1);
    }
}

TEST_CASE("fixed-image scheme demands four-view training cases") {
    std::vector<CaseRecord> train_split{make_case("a", Label::benign, {{Side::L, View::CC}}, 1),
                                        make_case("b", Label::malignant, {{Side::R, View::CC}}, 2)};
    std::vector<CaseRecord> val_split{four_std_case("v0", Label::benign, 3),
                                      four_std_case("v1", Label::malignant, 4)};
    CaseModel model(tiny_config("es-att-side"));
    TrainConfig cfg;
    cfg.scheme = TrainScheme::fixed_image;
    cfg.max_epochs = 1;
    CHECK_THROWS_WITH_AS(train(model, train_split, val_split, cfg),
                         doctest::Contains("empty training split"), DataError);
}
