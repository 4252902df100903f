#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "otsa/classifier.hpp"
#include "otsa/gradient.hpp"
#include "otsa/positioning.hpp"

namespace otsa {

struct AttackConfig {
    int n_scatterers = 1;
    double lambda = 10.0;
    double sigma = 0.4;
    double max_score = 0.5;
    std::array<double, kParamCount> theta_min = {0, 0, 0, -1, 0, 0, -1};
    std::array<double, kParamCount> theta_max = {10, 87, 87, 1, 2, 5, 1};
    double step_size = 0.1;
    // x, y move in pixel units and get a larger effective step.
    double position_step_scale = 5.0;
    int max_iters = 200;
    double tau = 0.10;  // stop once ground-truth confidence drops below this
    std::uint64_t seed = 0;

    void validate() const;
};

struct AttackResult {
    ScattererSet scatterers;
    SarImage perturbed;  // X + I(scatterers)
    Prediction prediction;
    int iterations = 0;
    bool success = false;  // predicted class != ground truth
    std::vector<bool> on_target;
    double ground_truth_confidence = 0.0;
};

// Each scatterer starts on a uniformly chosen mask pixel with sub-pixel
// jitter in [-0.5, 0.5); the other five parameters are uniform in
// [theta_min, theta_max]. Projected into bounds. Throws parameter_error on an
// empty mask.
ScattererSet init_scatterers(const TargetMask& mask, int n,
                             const std::array<double, kParamCount>& theta_min,
                             const std::array<double, kParamCount>& theta_max,
                             std::uint64_t seed);

// Component-wise clamp into [theta_min, theta_max].
ScattererSet project_bounds(const ScattererSet& set,
                            const std::array<double, kParamCount>& theta_min,
                            const std::array<double, kParamCount>& theta_max);

// Called after each ascent step; used by tests to observe the trajectory.
using IterationObserver =
    std::function<void(int iter, const ScattererSet&, const Prediction&)>;

// Projected gradient ascent on loss + (lambda/N) * mean positioning score,
// stopping once every scatterer is on the target and the ground-truth
// confidence falls below tau (or after max_iters).
AttackResult run_otsa(const SarImage& clean, int label, const TargetMask& mask,
                      const Weights& model, const AttackConfig& config,
                      const ImagingParams& xi, const IterationObserver& observer = nullptr);

// Same loop without the positioning score; the stop rule checks only the
// confidence. Initialization is the same on-target initializer.
AttackResult run_baseline(const SarImage& clean, int label, const TargetMask& mask,
                          const Weights& model, const AttackConfig& config,
                          const ImagingParams& xi, const IterationObserver& observer = nullptr);

// X + epsilon * sign(d loss/d pixel); sign(0) = 0.
SarImage fgsm(const SarImage& clean, int label, const Weights& model, double epsilon);

}  // namespace otsa
