#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "otsa/gradient.hpp"

using namespace otsa;

namespace {

ImagingParams test_xi() { return ImagingParams::make(0.591e9, 9.6e9, 0.05, 48, 48); }

ModelSpec test_model_spec() {
    ModelSpec spec;
    spec.input_size = 48;
    spec.num_classes = 3;
    return spec;
}

Weights constant_classifier() {
    Weights w = Weights::initialized(test_model_spec(), 5);
    std::fill(w.dense_w.begin(), w.dense_w.end(), 0.0);
    std::fill(w.dense_b.begin(), w.dense_b.end(), 0.0);
    return w;
}

ScattererParams random_scatterer(std::mt19937_64& rng, double pos_max = 40.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ScattererParams t;
    t.amplitude = 0.5 + 9.5 * unit(rng);
    t.x = pos_max * unit(rng);
    t.y = pos_max * unit(rng);
    t.gamma = 2.0 * unit(rng) - 1.0;
    t.length = 2.0 * unit(rng);
    t.alpha = 5.0 * unit(rng);
    t.phi_bar = 2.0 * unit(rng) - 1.0;
    return t;
}

TargetMask blob_mask(int size) {
    std::vector<std::pair<int, int>> coords;
    for (int x = 18; x < 26; ++x)
        for (int y = 20; y < 27; ++y) coords.push_back({x, y});
    return TargetMask::from_coords(size, size, coords);
}

SarImage textured_clean(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pix(0.0, 1.0);
    SarImage img(size, size);
    for (double& p : img.v) p = pix(rng);
    return img;
}

std::vector<double> flatten(const ScattererSet& set) {
    std::vector<double> flat;
    for (const ScattererParams& t : set.scatterers) {
        const auto a = t.to_array();
        flat.insert(flat.end(), a.begin(), a.end());
    }
    return flat;
}

ScattererSet unflatten(const std::vector<double>& flat) {
    ScattererSet set;
    for (std::size_t i = 0; i + kParamCount <= flat.size(); i += kParamCount) {
        std::array<double, kParamCount> a;
        std::copy(flat.begin() + i, flat.begin() + i + kParamCount, a.begin());
        set.scatterers.push_back(ScattererParams::from_array(a));
    }
    return set;
}

// Gradient-check metric: relative agreement, with an absolute floor for
// components near the finite-difference noise level.
void check_close(double analytic, double fd) {
    const double diff = std::abs(analytic - fd);
    const bool ok = diff <= 1e-4 * std::max(std::abs(analytic), std::abs(fd)) || diff <= 1e-6;
    CHECK(ok);
}

// Central-difference steps per parameter. x and y need a much finer step than
// the rest: the image oscillates in them at ~102 rad/pixel through the
// position ramp, so the truncation error scales with (102*h)^2.
std::vector<double> fd_steps(int n_scatterers) {
    std::vector<double> h;
    for (int i = 0; i < n_scatterers; ++i)
        for (double step : {1e-4, 2e-6, 2e-6, 1e-4, 1e-4, 1e-4, 1e-4}) h.push_back(step);
    return h;
}

}  // namespace

TEST_CASE("finite_difference on simple functions") {
    auto quadratic = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    const std::vector<double> g = finite_difference(quadratic, {1.0, 2.0}, 1e-5);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

    auto constant = [](const std::vector<double>&) { return 3.5; };
    for (double v : finite_difference(constant, {0.1, 0.2, 0.3}, 1e-5)) CHECK(v == 0.0);

    auto expf = [](const std::vector<double>& x) { return std::exp(x[0]); };
    CHECK(finite_difference(expf, {0.0}, 1e-5)[0] == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(finite_difference(constant, {1.0}, 0.0), parameter_error);
}

TEST_CASE("amplitude derivative is one at a matched unit peak") {
    const ImagingParams xi = test_xi();
    ScattererParams t;
    t.amplitude = 1.0;
    t.x = 20.0;
    t.y = 24.0;
    const auto jac = image_param_jacobian(ScattererSet{{t}}, xi);
    CHECK(std::abs(jac[0][kAmplitude].at(20, 24) - 1.0) < 1e-9);
}

TEST_CASE("gamma field derivative vanishes on the f_y = 0 row") {
    const ImagingParams xi = ImagingParams::make(0.591e9, 9.6e9, 0.05, 9, 9);
    const FrequencyGrid grid = build_frequency_grid(xi);
    REQUIRE(grid.fy[4] == doctest::Approx(0.0).epsilon(1e-15));
    std::mt19937_64 rng(3);
    const ScattererParams t = random_scatterer(rng, 7.0);
    const ComplexField d = scatterer_field_derivative(t, grid, xi, kGamma);
    for (int k = 0; k < 9; ++k) CHECK(std::abs(d.at(k, 4)) == 0.0);
}

TEST_CASE("derivative images match finite differences of the render") {
    const ImagingParams xi = test_xi();
    std::mt19937_64 rng(2718);
    const ScattererSet set{{random_scatterer(rng), random_scatterer(rng)}};
    const auto jac = image_param_jacobian(set, xi);
    const ComplexField z = render_complex(set, xi);

    std::uniform_int_distribution<int> pick(0, xi.m_star * xi.n_star - 1);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (int p = 0; p < kParamCount; ++p) {
            const double h = fd_steps(1)[p];
            ScattererSet plus = set, minus = set;
            auto ap = plus.scatterers[i].to_array();
            auto am = minus.scatterers[i].to_array();
            ap[p] += h;
            am[p] -= h;
            plus.scatterers[i] = ScattererParams::from_array(ap);
            minus.scatterers[i] = ScattererParams::from_array(am);
            const SarImage rp = render_image(plus, xi);
            const SarImage rm = render_image(minus, xi);
            for (int probe = 0; probe < 20; ++probe) {
                const int pix = pick(rng);
                if (std::abs(z.v[pix]) <= 1e-6) continue;
                const double fd = (rp.v[pix] - rm.v[pix]) / (2.0 * h);
                check_close(jac[i][p].v[pix], fd);
            }
        }
    }
}

TEST_CASE("objective value composes loss and score") {
    const ImagingParams xi = test_xi();
    const Weights model = Weights::initialized(test_model_spec(), 23);
    const TargetMask mask = blob_mask(48);
    const SarImage clean = textured_clean(48, 9);

    ScattererParams on;
    on.amplitude = 2.0;
    on.x = 20.0;
    on.y = 22.0;
    const ScattererSet set{{on}};

    // lambda = 0: classifier loss on X + I alone
    SarImage adv = render_image(set, xi);
    for (std::size_t i = 0; i < adv.v.size(); ++i) adv.v[i] += clean.v[i];
    CHECK(objective_value(set, clean, 1, model, mask, 0.0, 0.4, 0.5, xi) ==
          doctest::Approx(cross_entropy_loss(model, adv, 1)).epsilon(1e-15));

    // all scatterers on the mask: score term contributes exactly lambda * MAX
    const double with_score = objective_value(set, clean, 1, model, mask, 10.0, 0.4, 0.5, xi);
    const double without = objective_value(set, clean, 1, model, mask, 0.0, 0.4, 0.5, xi);
    CHECK(with_score - without == doctest::Approx(5.0).epsilon(1e-12));

    // zero amplitude: loss term equals the loss on the clean image
    ScattererParams ghost = on;
    ghost.amplitude = 0.0;
    CHECK(objective_value(ScattererSet{{ghost}}, clean, 1, model, mask, 0.0, 0.4, 0.5, xi) ==
          cross_entropy_loss(model, clean, 1));

    CHECK_THROWS_AS(objective_value(ScattererSet{}, clean, 1, model, mask, 0, 0.4, 0.5, xi),
                    parameter_error);
    CHECK_THROWS_AS(
        objective_value(set, SarImage(13, 13), 1, model, mask, 0, 0.4, 0.5, xi),
        parameter_error);
}

TEST_CASE("objective gradient is zero for a constant classifier with lambda 0") {
    const ImagingParams xi = test_xi();
    const Weights model = constant_classifier();
    const TargetMask mask = blob_mask(48);
    const SarImage clean = textured_clean(48, 10);
    std::mt19937_64 rng(12);
    const ScattererSet set{{random_scatterer(rng), random_scatterer(rng)}};
    const ParamGradient g =
        objective_gradient(set, clean, 0, model, mask, 0.0, 0.4, 0.5, xi);
    for (const auto& per : g.per_scatterer)
        for (double v : per) CHECK(v == 0.0);
}

TEST_CASE("score gradient pulls a lone scatterer toward a single-pixel mask") {
    const ImagingParams xi = test_xi();
    const Weights model = constant_classifier();
    const TargetMask mask = TargetMask::from_coords(48, 48, {{10, 10}});
    const SarImage clean(48, 48, 0.0);
    ScattererParams t;
    t.amplitude = 1.0;
    t.x = 10.0;
    t.y = 13.0;
    const ParamGradient g =
        objective_gradient(ScattererSet{{t}}, clean, 0, model, mask, 1.0, 0.4, 0.5, xi);
    CHECK(g.per_scatterer[0][kX] == 0.0);
    CHECK(g.per_scatterer[0][kY] < 0.0);
}

TEST_CASE("score term touches only the position components") {
    const ImagingParams xi = test_xi();
    const Weights model = Weights::initialized(test_model_spec(), 29);
    const TargetMask mask = blob_mask(48);
    const SarImage clean = textured_clean(48, 11);
    std::mt19937_64 rng(14);
    const ScattererSet set{{random_scatterer(rng), random_scatterer(rng)}};

    const ParamGradient without =
        objective_gradient(set, clean, 2, model, mask, 0.0, 0.4, 0.5, xi);
    const ParamGradient with =
        objective_gradient(set, clean, 2, model, mask, 25.0, 0.4, 0.5, xi);
    for (std::size_t i = 0; i < set.size(); ++i)
        for (int p = 0; p < kParamCount; ++p)
            if (p != kX && p != kY)
                CHECK(with.per_scatterer[i][p] == without.per_scatterer[i][p]);
}

TEST_CASE("zero-amplitude sets have no position sensitivity in the loss term") {
    const ImagingParams xi = test_xi();
    const Weights model = Weights::initialized(test_model_spec(), 31);
    const TargetMask mask = blob_mask(48);
    const SarImage clean = textured_clean(48, 13);
    std::mt19937_64 rng(15);
    ScattererSet set{{random_scatterer(rng), random_scatterer(rng)}};
    for (ScattererParams& t : set.scatterers) t.amplitude = 0.0;
    const ParamGradient g =
        objective_gradient(set, clean, 0, model, mask, 0.0, 0.4, 0.5, xi);
    for (const auto& per : g.per_scatterer) {
        CHECK(per[kX] == 0.0);
        CHECK(per[kY] == 0.0);
    }
}

TEST_CASE("objective gradient matches the finite-difference oracle") {
    const ImagingParams xi = test_xi();
    const Weights model = Weights::initialized(test_model_spec(), 37);
    const TargetMask mask = blob_mask(48);
    const SarImage clean = textured_clean(48, 17);
    std::mt19937_64 rng(1234);

    const double lambda = 10.0, sigma = 0.4, max_score = 0.5;
    int done = 0;
    while (done < 6) {
        const int n = 1 + int(done % 3);
        ScattererSet set;
        for (int i = 0; i < n; ++i) set.scatterers.push_back(random_scatterer(rng));
        // keep every position away from the truncation boundary, where the
        // objective is not differentiable
        bool boundary = false;
        for (const ScattererParams& t : set.scatterers) {
            const double raw = raw_score(t.x, t.y, mask, sigma);
            if (std::abs(raw - max_score) < 1e-3) boundary = true;
        }
        if (boundary) continue;

        const int label = done % 3;
        const ParamGradient analytic = objective_gradient(set, clean, label, model, mask,
                                                          lambda, sigma, max_score, xi);
        auto f = [&](const std::vector<double>& flat) {
            return objective_value(unflatten(flat), clean, label, model, mask, lambda, sigma,
                                   max_score, xi);
        };
        const std::vector<double> fd = finite_difference(f, flatten(set), fd_steps(n));
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < kParamCount; ++p)
                check_close(analytic.per_scatterer[i][p], fd[i * kParamCount + p]);
        ++done;
    }
}
