#pragma once

#include <array>
#include <functional>
#include <vector>

#include "otsa/ascm.hpp"
#include "otsa/classifier.hpp"
#include "otsa/positioning.hpp"

namespace otsa {

// One 7-vector of partial derivatives per scatterer, ordered
// [A, x, y, gamma, L, alpha, phi_bar].
struct ParamGradient {
    std::vector<std::array<double, kParamCount>> per_scatterer;

    std::size_t size() const { return per_scatterer.size(); }
    bool finite() const;
};

// d(field entry)/d(parameter) for every grid point of one scatterer,
// differentiating each factor analytically.
ComplexField scatterer_field_derivative(const ScattererParams& theta,
                                        const FrequencyGrid& grid, const ImagingParams& xi,
                                        int param);

// Derivative images dI_p/d(theta_k): for each pixel with pre-magnitude value
// z_p, d|z_p|/dtheta = Re(conj(z_p) * dz_p/dtheta) / max(|z_p|, 1e-12), with
// dz_p/dtheta the centered IDFT of the field derivative. Returned as
// result[i][k] for scatterer i, parameter k.
std::vector<std::array<SarImage, kParamCount>> image_param_jacobian(const ScattererSet& set,
                                                                    const ImagingParams& xi);

// Cross-entropy loss of the model on X + I(set, xi) plus lambda times the
// mean positioning score. Throws parameter_error on dimension mismatch or an
// empty set.
double objective_value(const ScattererSet& set, const SarImage& clean, int label,
                       const Weights& model, const TargetMask& mask, double lambda,
                       double sigma, double max_score, const ImagingParams& xi);

// Exact gradient of objective_value with respect to every scatterer
// parameter. The loss term is contracted through the adjoint of the linear
// IDFT (one transform for all parameters); the score term contributes only to
// the x, y components.
ParamGradient objective_gradient(const ScattererSet& set, const SarImage& clean, int label,
                                 const Weights& model, const TargetMask& mask, double lambda,
                                 double sigma, double max_score, const ImagingParams& xi);

// Central differences (f(x+h e_k) - f(x-h e_k)) / (2h) per component.
std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& x0, double h);
// Per-component step sizes.
std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& x0,
                                      const std::vector<double>& h);

}  // namespace otsa
