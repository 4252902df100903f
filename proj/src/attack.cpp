#include "otsa/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace otsa {

void AttackConfig::validate() const {
    if (n_scatterers < 1) throw parameter_error("attack: need at least one scatterer");
    if (!(tau > 0.0 && tau < 1.0)) throw parameter_error("attack: tau must lie in (0, 1)");
    if (max_iters < 0) throw parameter_error("attack: max_iters must be >= 0");
    if (!(step_size > 0.0)) throw parameter_error("attack: step size must be > 0");
    for (int p = 0; p < kParamCount; ++p)
        if (theta_min[p] > theta_max[p])
            throw parameter_error("attack: theta_min exceeds theta_max");
    ScoreParams{sigma, max_score}.validate();
}

ScattererSet init_scatterers(const TargetMask& mask, int n,
                             const std::array<double, kParamCount>& theta_min,
                             const std::array<double, kParamCount>& theta_max,
                             std::uint64_t seed) {
    if (mask.empty()) throw parameter_error("init: empty target mask");
    if (n < 1) throw parameter_error("init: need at least one scatterer");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, mask.coords.size() - 1);
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    ScattererSet set;
    set.scatterers.reserve(n);
    for (int i = 0; i < n; ++i) {
        const auto [px, py] = mask.coords[pick(rng)];
        std::array<double, kParamCount> a{};
        a[kX] = px + jitter(rng);
        a[kY] = py + jitter(rng);
        for (int p : {int(kAmplitude), int(kGamma), int(kLength), int(kAlpha), int(kPhiBar)})
            a[p] = theta_min[p] + (theta_max[p] - theta_min[p]) * unit(rng);
        set.scatterers.push_back(ScattererParams::from_array(a));
    }
    return project_bounds(set, theta_min, theta_max);
}

ScattererSet project_bounds(const ScattererSet& set,
                            const std::array<double, kParamCount>& theta_min,
                            const std::array<double, kParamCount>& theta_max) {
    ScattererSet out = set;
    for (ScattererParams& theta : out.scatterers) {
        auto a = theta.to_array();
        for (int p = 0; p < kParamCount; ++p) a[p] = std::clamp(a[p], theta_min[p], theta_max[p]);
        theta = ScattererParams::from_array(a);
    }
    return out;
}

namespace {

bool all_on_target(const ScattererSet& set, const TargetMask& mask) {
    for (const ScattererParams& theta : set.scatterers)
        if (!is_on_target(theta.x, theta.y, mask)) return false;
    return true;
}

AttackResult run_ascent(const SarImage& clean, int label, const TargetMask& mask,
                        const Weights& model, const AttackConfig& config,
                        const ImagingParams& xi, bool use_score, bool stop_needs_on_target,
                        const IterationObserver& observer) {
    config.validate();
    if (mask.empty()) throw parameter_error("attack: empty target mask");
    if (clean.m != xi.m_star || clean.n != xi.n_star)
        throw parameter_error("attack: image dimensions do not match the imaging grid");
    if (label < 0 || label >= model.spec.num_classes)
        throw parameter_error("attack: label out of range");

    const double lambda = use_score ? config.lambda : 0.0;
    ScattererSet set = init_scatterers(mask, config.n_scatterers, config.theta_min,
                                       config.theta_max, config.seed);

    auto evaluate = [&](const ScattererSet& s) {
        SarImage adv = render_image(s, xi);
        for (std::size_t i = 0; i < adv.v.size(); ++i) adv.v[i] += clean.v[i];
        Prediction pred = predict(model, adv);
        return std::pair<SarImage, Prediction>(std::move(adv), std::move(pred));
    };

    auto [adv, pred] = evaluate(set);
    int iterations = 0;
    // Scatterer interference makes the loss oscillate in x, y at sub-pixel
    // scale, so raw position gradients can spike ~100x. Capping the
    // per-iteration displacement keeps a step from jumping clear of the
    // positioning score's pull radius (a few sigma).
    constexpr double kMaxPositionStep = 1.0;  // pixels
    for (int iter = 1; iter <= config.max_iters; ++iter) {
        const ParamGradient grad = objective_gradient(set, clean, label, model, mask, lambda,
                                                      config.sigma, config.max_score, xi);
        for (std::size_t i = 0; i < set.size(); ++i) {
            auto a = set.scatterers[i].to_array();
            for (int p = 0; p < kParamCount; ++p) {
                if (p == kX || p == kY) continue;
                a[p] += config.step_size * grad.per_scatterer[i][p];
            }
            double dx = config.step_size * config.position_step_scale *
                        grad.per_scatterer[i][kX];
            double dy = config.step_size * config.position_step_scale *
                        grad.per_scatterer[i][kY];
            const double step_len = std::hypot(dx, dy);
            if (step_len > kMaxPositionStep) {
                dx *= kMaxPositionStep / step_len;
                dy *= kMaxPositionStep / step_len;
            }
            a[kX] += dx;
            a[kY] += dy;
            set.scatterers[i] = ScattererParams::from_array(a);
        }
        set = project_bounds(set, config.theta_min, config.theta_max);
        iterations = iter;

        std::tie(adv, pred) = evaluate(set);
        if (observer) observer(iter, set, pred);

        const bool confident_fail = pred.probabilities[label] < config.tau;
        const bool placed = !stop_needs_on_target || all_on_target(set, mask);
        if (confident_fail && placed) break;
    }

    if (!adv.finite()) throw numerical_error("attack: non-finite perturbed image");

    AttackResult result;
    result.scatterers = std::move(set);
    result.perturbed = std::move(adv);
    result.prediction = std::move(pred);
    result.iterations = iterations;
    result.success = result.prediction.predicted_class != label;
    result.ground_truth_confidence = result.prediction.probabilities[label];
    result.on_target.reserve(result.scatterers.size());
    for (const ScattererParams& theta : result.scatterers.scatterers)
        result.on_target.push_back(is_on_target(theta.x, theta.y, mask));
    return result;
}

}  // namespace

AttackResult run_otsa(const SarImage& clean, int label, const TargetMask& mask,
                      const Weights& model, const AttackConfig& config,
                      const ImagingParams& xi, const IterationObserver& observer) {
    return run_ascent(clean, label, mask, model, config, xi, /*use_score=*/true,
                      /*stop_needs_on_target=*/true, observer);
}

AttackResult run_baseline(const SarImage& clean, int label, const TargetMask& mask,
                          const Weights& model, const AttackConfig& config,
                          const ImagingParams& xi, const IterationObserver& observer) {
    return run_ascent(clean, label, mask, model, config, xi, /*use_score=*/false,
                      /*stop_needs_on_target=*/false, observer);
}

SarImage fgsm(const SarImage& clean, int label, const Weights& model, double epsilon) {
    if (epsilon < 0.0) throw parameter_error("fgsm: epsilon must be >= 0");
    const PixelGradient grad = input_gradient(model, clean, label);
    SarImage adv = clean;
    for (std::size_t i = 0; i < adv.v.size(); ++i) {
        const double g = grad.v[i];
        const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        adv.v[i] += epsilon * sign;
    }
    return adv;
}

}  // namespace otsa
