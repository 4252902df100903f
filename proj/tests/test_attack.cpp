#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "otsa/attack.hpp"

using namespace otsa;

namespace {

constexpr int kImg = 32;

ImagingParams test_xi() { return ImagingParams::make(0.591e9, 9.6e9, 0.05, kImg, kImg); }

ModelSpec test_spec(int classes = 4) {
    ModelSpec spec;
    spec.input_size = kImg;
    spec.num_classes = classes;
    return spec;
}

AttackConfig test_config() {
    AttackConfig cfg;
    cfg.theta_max = {10, kImg - 1, kImg - 1, 1, 2, 5, 1};
    cfg.max_iters = 10;
    cfg.seed = 42;
    return cfg;
}

TargetMask blob_mask() {
    std::vector<std::pair<int, int>> coords;
    for (int x = 12; x < 22; ++x)
        for (int y = 14; y < 23; ++y) coords.push_back({x, y});
    return TargetMask::from_coords(kImg, kImg, coords);
}

SarImage noise_image(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pix(0.0, 0.4);
    SarImage img(kImg, kImg);
    for (double& p : img.v) p = pix(rng);
    return img;
}

// Pass-through taps: a single conv path copies the stride-4 input lattice into
// the pooled feature, and the dense row makes the class-0 loss strictly
// increasing in that feature.
Weights monotone_model() {
    Weights w = Weights::initialized(test_spec(2), 1);
    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    zero(w.conv1_w);
    zero(w.conv1_b);
    zero(w.conv2_w);
    zero(w.conv2_b);
    zero(w.dense_w);
    zero(w.dense_b);
    w.conv1_w[(0 * 5 + 2) * 5 + 2] = 1.0;                    // filter 0, center tap
    w.conv2_w[((0 * 8 + 0) * 5 + 2) * 5 + 2] = 1.0;          // filter 0 <- channel 0
    w.dense_w[0 * ModelSpec::kConv2Filters + 0] = -3.0;      // class 0 logit falls
    w.dense_w[1 * ModelSpec::kConv2Filters + 0] = 3.0;       // class 1 logit rises
    return w;
}

bool sets_equal(const ScattererSet& a, const ScattererSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.scatterers[i].to_array() != b.scatterers[i].to_array()) return false;
    return true;
}

}  // namespace

TEST_CASE("init places scatterers on the mask with jitter") {
    const TargetMask one = TargetMask::from_coords(48, 48, {{40, 40}});
    AttackConfig cfg = test_config();
    cfg.theta_max[kX] = 47;
    cfg.theta_max[kY] = 47;
    const ScattererSet set = init_scatterers(one, 3, cfg.theta_min, cfg.theta_max, 7);
    REQUIRE(set.size() == 3);
    for (const ScattererParams& t : set.scatterers) {
        CHECK(std::abs(t.x - 40.0) <= 0.5);
        CHECK(std::abs(t.y - 40.0) <= 0.5);
    }
}

TEST_CASE("init respects bounds and is deterministic") {
    const TargetMask mask = blob_mask();
    const AttackConfig cfg = test_config();
    const ScattererSet a = init_scatterers(mask, 3, cfg.theta_min, cfg.theta_max, 99);
    const ScattererSet b = init_scatterers(mask, 3, cfg.theta_min, cfg.theta_max, 99);
    CHECK(sets_equal(a, b));
    for (const ScattererParams& t : a.scatterers) {
        const auto arr = t.to_array();
        for (int p = 0; p < kParamCount; ++p) {
            CHECK(arr[p] >= cfg.theta_min[p]);
            CHECK(arr[p] <= cfg.theta_max[p]);
        }
    }
    CHECK_THROWS_AS(
        init_scatterers(TargetMask::from_coords(8, 8, {}), 1, cfg.theta_min, cfg.theta_max, 1),
        parameter_error);
}

TEST_CASE("project_bounds clamps component-wise") {
    const AttackConfig cfg = test_config();
    ScattererParams in_bounds{2.0, 5.0, 6.0, 0.2, 1.0, 2.5, -0.5};
    ScattererParams wild{15.0, -3.0, 100.0, -2.0, 5.0, 9.0, 2.0};
    const ScattererSet projected =
        project_bounds(ScattererSet{{in_bounds, wild}}, cfg.theta_min, cfg.theta_max);
    CHECK(projected.scatterers[0].to_array() == in_bounds.to_array());
    const auto w = projected.scatterers[1].to_array();
    CHECK(w[kAmplitude] == 10.0);
    CHECK(w[kX] == 0.0);
    CHECK(w[kY] == double(kImg - 1));
    CHECK(w[kGamma] == -1.0);
    CHECK(w[kLength] == 2.0);
    CHECK(w[kAlpha] == 5.0);
    CHECK(w[kPhiBar] == 1.0);
}

TEST_CASE("zero iterations returns the projected initialization") {
    const ImagingParams xi = test_xi();
    const TargetMask mask = blob_mask();
    const Weights model = Weights::initialized(test_spec(), 3);
    const SarImage clean = noise_image(11);
    AttackConfig cfg = test_config();
    cfg.max_iters = 0;
    cfg.n_scatterers = 2;

    const AttackResult result = run_otsa(clean, 0, mask, model, cfg, xi);
    CHECK(result.iterations == 0);
    const ScattererSet init =
        init_scatterers(mask, 2, cfg.theta_min, cfg.theta_max, cfg.seed);
    CHECK(sets_equal(result.scatterers, init));

    const SarImage render = render_image(result.scatterers, xi);
    for (std::size_t i = 0; i < render.v.size(); ++i)
        CHECK(result.perturbed.v[i] == clean.v[i] + render.v[i]);
}

TEST_CASE("ascent drives the amplitude upward on a monotone objective") {
    const ImagingParams xi = test_xi();
    const TargetMask one = TargetMask::from_coords(kImg, kImg, {{20, 20}});
    const Weights model = monotone_model();
    const SarImage clean(kImg, kImg, 0.0);
    REQUIRE(predict(model, clean).predicted_class == 0);

    AttackConfig cfg = test_config();
    cfg.n_scatterers = 1;
    cfg.max_iters = 30;
    cfg.step_size = 0.5;

    std::vector<double> amplitudes;
    const AttackResult result =
        run_otsa(clean, 0, one, model, cfg, xi,
                 [&](int, const ScattererSet& set, const Prediction&) {
                     amplitudes.push_back(set.scatterers[0].amplitude);
                 });
    REQUIRE(amplitudes.size() >= 2);
    for (std::size_t i = 1; i < amplitudes.size(); ++i)
        CHECK(amplitudes[i] >= amplitudes[i - 1] - 1e-12);
    CHECK(result.scatterers.scatterers[0].amplitude >
          init_scatterers(one, 1, cfg.theta_min, cfg.theta_max, cfg.seed)
              .scatterers[0]
              .amplitude);
}

TEST_CASE("attack runs are deterministic end to end") {
    const ImagingParams xi = test_xi();
    const TargetMask mask = blob_mask();
    const Weights model = Weights::initialized(test_spec(), 21);
    const SarImage clean = noise_image(13);
    AttackConfig cfg = test_config();
    cfg.n_scatterers = 2;
    const int label = predict(model, clean).predicted_class;

    const AttackResult a = run_otsa(clean, label, mask, model, cfg, xi);
    const AttackResult b = run_otsa(clean, label, mask, model, cfg, xi);
    CHECK(sets_equal(a.scatterers, b.scatterers));
    CHECK(a.perturbed.v == b.perturbed.v);
    CHECK(a.iterations == b.iterations);
    CHECK(a.prediction.probabilities == b.prediction.probabilities);
}

TEST_CASE("baseline ignores lambda") {
    const ImagingParams xi = test_xi();
    const TargetMask mask = blob_mask();
    const Weights model = Weights::initialized(test_spec(), 23);
    const SarImage clean = noise_image(17);
    const int label = predict(model, clean).predicted_class;

    AttackConfig a = test_config();
    a.n_scatterers = 2;
    AttackConfig b = a;
    b.lambda = 1234.5;
    const AttackResult ra = run_baseline(clean, label, mask, model, a, xi);
    const AttackResult rb = run_baseline(clean, label, mask, model, b, xi);
    CHECK(sets_equal(ra.scatterers, rb.scatterers));
    CHECK(ra.perturbed.v == rb.perturbed.v);
}

TEST_CASE("with lambda zero the two attacks walk the same trajectory") {
    const ImagingParams xi = test_xi();
    const TargetMask mask = blob_mask();
    const SarImage clean = noise_image(19);
    std::mt19937_64 seeds(31);
    for (int trial = 0; trial < 10; ++trial) {
        const Weights model = Weights::initialized(test_spec(), seeds());
        const int label = predict(model, clean).predicted_class;
        AttackConfig cfg = test_config();
        cfg.n_scatterers = 1 + trial % 3;
        cfg.lambda = 0.0;
        cfg.max_iters = 5;
        cfg.seed = seeds();

        std::vector<ScattererSet> traj_a, traj_b;
        const AttackResult ra =
            run_otsa(clean, label, mask, model, cfg, xi,
                     [&](int, const ScattererSet& s, const Prediction&) {
                         traj_a.push_back(s);
                     });
        const AttackResult rb =
            run_baseline(clean, label, mask, model, cfg, xi,
                         [&](int, const ScattererSet& s, const Prediction&) {
                             traj_b.push_back(s);
                         });
        const std::size_t shared = std::min(traj_a.size(), traj_b.size());
        for (std::size_t i = 0; i < shared; ++i) CHECK(sets_equal(traj_a[i], traj_b[i]));
        // identical unless one run's stop rule fired first
        if (ra.iterations == rb.iterations) CHECK(ra.perturbed.v == rb.perturbed.v);
    }
}

TEST_CASE("every iterate stays inside the bounds") {
    const ImagingParams xi = test_xi();
    const TargetMask mask = blob_mask();
    const Weights model = Weights::initialized(test_spec(), 29);
    const SarImage clean = noise_image(23);
    AttackConfig cfg = test_config();
    cfg.n_scatterers = 3;
    cfg.max_iters = 15;
    cfg.step_size = 0.4;
    const int label = predict(model, clean).predicted_class;

    auto assert_bounds = [&cfg](int, const ScattererSet& set, const Prediction&) {
        for (const ScattererParams& t : set.scatterers) {
            const auto a = t.to_array();
            for (int p = 0; p < kParamCount; ++p) {
                CHECK(a[p] >= cfg.theta_min[p]);
                CHECK(a[p] <= cfg.theta_max[p]);
            }
        }
    };
    run_otsa(clean, label, mask, model, cfg, xi, assert_bounds);
    run_baseline(clean, label, mask, model, cfg, xi, assert_bounds);
}

TEST_CASE("early exits satisfy the stop rule; X^adv decomposes") {
    const ImagingParams xi = test_xi();
    const TargetMask mask = blob_mask();
    const SarImage clean = noise_image(27);
    std::mt19937_64 seeds(71);
    for (int trial = 0; trial < 6; ++trial) {
        const Weights model = Weights::initialized(test_spec(), seeds());
        const int label = predict(model, clean).predicted_class;
        AttackConfig cfg = test_config();
        cfg.n_scatterers = 1 + trial % 3;
        cfg.max_iters = 60;
        cfg.seed = seeds();
        const AttackResult r = run_otsa(clean, label, mask, model, cfg, xi);

        if (r.iterations < cfg.max_iters) {
            CHECK(r.ground_truth_confidence < cfg.tau);
            for (bool flag : r.on_target) CHECK(flag);
        }
        for (std::size_t i = 0; i < r.on_target.size(); ++i) {
            const ScattererParams& t = r.scatterers.scatterers[i];
            CHECK(r.on_target[i] == is_on_target(t.x, t.y, mask));
        }
        const SarImage render = render_image(r.scatterers, xi);
        for (std::size_t i = 0; i < render.v.size(); ++i)
            CHECK(std::abs(r.perturbed.v[i] - clean.v[i] - render.v[i]) <= 1e-12);
    }
}

TEST_CASE("fgsm identity, sign structure, loss increase") {
    const Weights model = monotone_model();
    const SarImage clean = noise_image(33);

    const SarImage same = fgsm(clean, 0, model, 0.0);
    CHECK(same.v == clean.v);

    const double eps = 0.05;
    const SarImage adv = fgsm(clean, 0, model, eps);
    for (std::size_t i = 0; i < adv.v.size(); ++i) {
        const double d = adv.v[i] - clean.v[i];
        CHECK((d == 0.0 || std::abs(std::abs(d) - eps) < 1e-15));
    }
    CHECK(cross_entropy_loss(model, adv, 0) > cross_entropy_loss(model, clean, 0));

    CHECK_THROWS_AS(fgsm(clean, 0, model, -0.1), parameter_error);
}
