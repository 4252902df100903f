#include "otsa/positioning.hpp"

#include <algorithm>
#include <cmath>

namespace otsa {

TargetMask TargetMask::from_coords(int height, int width,
                                   std::vector<std::pair<int, int>> coords) {
    for (auto [x, y] : coords) {
        if (x < 0 || x >= height || y < 0 || y >= width)
            throw parameter_error("mask: coordinate outside image bounds");
    }
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    TargetMask mask;
    mask.height = height;
    mask.width = width;
    mask.coords = std::move(coords);
    return mask;
}

bool TargetMask::contains(int x, int y) const {
    return std::binary_search(coords.begin(), coords.end(), std::make_pair(x, y));
}

void ScoreParams::validate() const {
    if (!(sigma > 0.0)) throw parameter_error("score: sigma must be > 0");
    if (!(max_score > 0.0)) throw parameter_error("score: MAX must be > 0");
}

double raw_score(double x, double y, const TargetMask& mask, double sigma) {
    ScoreParams{sigma, 1.0}.validate();
    const double inv = 1.0 / (2.0 * sigma * sigma);
    double sum = 0.0;
    for (auto [mx, my] : mask.coords) {
        const double dx = x - mx;
        const double dy = y - my;
        sum += std::exp(-(dx * dx + dy * dy) * inv);
    }
    return sum;
}

double positioning_score(double x, double y, const TargetMask& mask, double sigma,
                         double max_score) {
    ScoreParams{sigma, max_score}.validate();
    return std::min(raw_score(x, y, mask, sigma), max_score);
}

std::pair<double, double> score_gradient(double x, double y, const TargetMask& mask,
                                         double sigma, double max_score) {
    ScoreParams{sigma, max_score}.validate();
    if (raw_score(x, y, mask, sigma) >= max_score) return {0.0, 0.0};
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const double inv_sq = 1.0 / (sigma * sigma);
    double gx = 0.0, gy = 0.0;
    for (auto [mx, my] : mask.coords) {
        const double dx = x - mx;
        const double dy = y - my;
        const double kernel = std::exp(-(dx * dx + dy * dy) * inv);
        gx -= dx * inv_sq * kernel;
        gy -= dy * inv_sq * kernel;
    }
    return {gx, gy};
}

double mean_score(const ScattererSet& set, const TargetMask& mask, double sigma,
                  double max_score) {
    if (set.empty()) throw parameter_error("mean_score: empty scatterer set");
    double sum = 0.0;
    for (const ScattererParams& theta : set.scatterers)
        sum += positioning_score(theta.x, theta.y, mask, sigma, max_score);
    return sum / double(set.size());
}

bool is_on_target(double x, double y, const TargetMask& mask) {
    if (mask.empty()) return false;
    return mask.contains(int(std::lround(x)), int(std::lround(y)));
}

}  // namespace otsa
