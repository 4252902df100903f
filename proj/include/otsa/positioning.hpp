#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "otsa/ascm.hpp"

namespace otsa {

// Pixel coordinates of the on-ground target region. Stored sorted and
// deduplicated so iteration order (and everything seeded from it) is
// deterministic.
struct TargetMask {
    int width = 0;   // columns (y extent)
    int height = 0;  // rows (x extent)
    std::vector<std::pair<int, int>> coords;  // (x, y), sorted, unique

    static TargetMask from_coords(int height, int width,
                                  std::vector<std::pair<int, int>> coords);
    bool empty() const { return coords.empty(); }
    std::size_t size() const { return coords.size(); }
    bool contains(int x, int y) const;
};

struct ScoreParams {
    double sigma = 0.4;
    double max_score = 0.5;

    void validate() const;  // sigma > 0, max_score > 0
};

// Sum of Gaussian kernels over all mask pixels:
// sum_j exp(-||(x,y)-(x'_j,y'_j)||^2 / (2 sigma^2)); 0 for an empty mask.
double raw_score(double x, double y, const TargetMask& mask, double sigma);

// min(raw_score, max_score).
double positioning_score(double x, double y, const TargetMask& mask, double sigma,
                         double max_score);

// Analytic (d/dx, d/dy) of positioning_score; the zero vector on the
// truncation plateau (raw_score >= max_score, the subgradient choice that
// leaves on-target scatterers force-free).
std::pair<double, double> score_gradient(double x, double y, const TargetMask& mask,
                                         double sigma, double max_score);

// (1/N) * sum_i positioning_score(x_i, y_i). Throws parameter_error on an
// empty set.
double mean_score(const ScattererSet& set, const TargetMask& mask, double sigma,
                  double max_score);

// true iff the nearest pixel (round(x), round(y)) is a mask coordinate.
bool is_on_target(double x, double y, const TargetMask& mask);

}  // namespace otsa
