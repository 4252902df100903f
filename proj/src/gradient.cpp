#include "otsa/gradient.hpp"

#include <cmath>
#include <numbers>

namespace otsa {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMagnitudeFloor = 1e-12;

}  // namespace

bool ParamGradient::finite() const {
    for (const auto& g : per_scatterer)
        for (double x : g)
            if (!std::isfinite(x)) return false;
    return true;
}

ComplexField scatterer_field_derivative(const ScattererParams& theta,
                                        const FrequencyGrid& grid, const ImagingParams& xi,
                                        int param) {
    if (param < 0 || param >= kParamCount)
        throw parameter_error("field derivative: parameter index out of range");
    const int m = int(grid.fx.size());
    const int n = int(grid.fy.size());
    ComplexField d(m, n);

    const double fc = xi.center_freq_hz;
    const double half_aperture = xi.aperture_rad / 2.0;
    const double kappa = kPi / (2.0 * std::sin(half_aperture)) * xi.eta_y;
    const double orient = theta.phi_bar * half_aperture;
    const double ramp_cx = 4.0 * kPi / xi.speed_of_light * xi.pixel_spacing_x;
    const double ramp_cy = 4.0 * kPi / xi.speed_of_light * xi.pixel_spacing_y;

    for (int k = 0; k < m; ++k) {
        const double fx = grid.fx[k];
        for (int l = 0; l < n; ++l) {
            const double fy = grid.fy[l];
            const double r = std::hypot(fx, fy);
            const double ratio = r / fc;

            std::complex<double> freq_dep;
            if (r == 0.0) {
                freq_dep = theta.alpha == 0.0 ? 1.0 : 0.0;
            } else {
                freq_dep = std::polar(std::pow(ratio, theta.alpha), theta.alpha * kPi / 2.0);
            }
            const double aspect = std::exp(-(fy / fc) * theta.gamma);
            const double psi = std::atan2(fy, fx);
            const double angle = std::sin(psi - orient);
            const double q = kappa * ratio * theta.length * angle;
            const double taper = sinc(q);
            const std::complex<double> ramp =
                std::polar(1.0, -(ramp_cx * theta.x * fx + ramp_cy * theta.y * fy));

            const std::complex<double> base = aspect * taper * freq_dep * ramp;
            std::complex<double> value;
            switch (param) {
                case kAmplitude:
                    value = base;
                    break;
                case kX:
                    value = theta.amplitude * base *
                            std::complex<double>(0.0, -ramp_cx * fx);
                    break;
                case kY:
                    value = theta.amplitude * base *
                            std::complex<double>(0.0, -ramp_cy * fy);
                    break;
                case kGamma:
                    value = theta.amplitude * base * (-(fy / fc));
                    break;
                case kLength:
                    value = theta.amplitude * aspect * freq_dep * ramp *
                            sinc_derivative(q) * kappa * ratio * angle;
                    break;
                case kAlpha: {
                    // d/dalpha of (j r/fc)^alpha = value * (ln(r/fc) + j pi/2);
                    // zero (one-sided) at r = 0.
                    if (r == 0.0) {
                        value = 0.0;
                    } else {
                        value = theta.amplitude * base *
                                std::complex<double>(std::log(ratio), kPi / 2.0);
                    }
                    break;
                }
                case kPhiBar: {
                    const double dq = kappa * ratio * theta.length *
                                      std::cos(psi - orient) * (-half_aperture);
                    value = theta.amplitude * aspect * freq_dep * ramp *
                            sinc_derivative(q) * dq;
                    break;
                }
                default:
                    value = 0.0;
            }
            d.at(k, l) = value;
        }
    }
    return d;
}

std::vector<std::array<SarImage, kParamCount>> image_param_jacobian(const ScattererSet& set,
                                                                    const ImagingParams& xi) {
    xi.validate();
    const FrequencyGrid grid = build_frequency_grid(xi);
    const CenteredIdft idft(xi.m_star, xi.n_star);
    const ComplexField z = idft.apply(total_field(set, grid, xi));

    std::vector<std::array<SarImage, kParamCount>> jac(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (int p = 0; p < kParamCount; ++p) {
            const ComplexField dz =
                idft.apply(scatterer_field_derivative(set.scatterers[i], grid, xi, p));
            SarImage img(xi.m_star, xi.n_star);
            for (std::size_t t = 0; t < z.v.size(); ++t) {
                const double mag = std::max(std::abs(z.v[t]), kMagnitudeFloor);
                img.v[t] = (std::conj(z.v[t]) * dz.v[t]).real() / mag;
            }
            jac[i][p] = std::move(img);
        }
    }
    return jac;
}

namespace {

SarImage perturbed_image(const ScattererSet& set, const SarImage& clean,
                         const ImagingParams& xi) {
    if (clean.m != xi.m_star || clean.n != xi.n_star)
        throw parameter_error("objective: image dimensions do not match the imaging grid");
    SarImage adv = render_image(set, xi);
    for (std::size_t i = 0; i < adv.v.size(); ++i) adv.v[i] += clean.v[i];
    return adv;
}

void check_objective_inputs(const ScattererSet& set, const SarImage& clean,
                            const TargetMask& mask) {
    if (set.empty()) throw parameter_error("objective: empty scatterer set");
    if (mask.height != clean.m || mask.width != clean.n)
        throw parameter_error("objective: mask dimensions do not match the image");
}

}  // namespace

double objective_value(const ScattererSet& set, const SarImage& clean, int label,
                       const Weights& model, const TargetMask& mask, double lambda,
                       double sigma, double max_score, const ImagingParams& xi) {
    check_objective_inputs(set, clean, mask);
    const SarImage adv = perturbed_image(set, clean, xi);
    return cross_entropy_loss(model, adv, label) +
           lambda * mean_score(set, mask, sigma, max_score);
}

ParamGradient objective_gradient(const ScattererSet& set, const SarImage& clean, int label,
                                 const Weights& model, const TargetMask& mask, double lambda,
                                 double sigma, double max_score, const ImagingParams& xi) {
    check_objective_inputs(set, clean, mask);
    xi.validate();
    const FrequencyGrid grid = build_frequency_grid(xi);
    const CenteredIdft idft(xi.m_star, xi.n_star);
    const ComplexField z = idft.apply(total_field(set, grid, xi));

    SarImage adv(clean.m, clean.n);
    for (std::size_t i = 0; i < adv.v.size(); ++i)
        adv.v[i] = clean.v[i] + std::abs(z.v[i]);
    const PixelGradient pixel_grad = input_gradient(model, adv, label);

    // Pull d(loss)/d(pixel) back to the frequency grid through the magnitude
    // and the linear transform; each parameter then contracts against its
    // analytic field derivative.
    ComplexField weights(z.m, z.n);
    for (std::size_t i = 0; i < z.v.size(); ++i) {
        const double mag = std::max(std::abs(z.v[i]), kMagnitudeFloor);
        weights.v[i] = pixel_grad.v[i] * std::conj(z.v[i]) / mag;
    }
    const ComplexField h = idft.adjoint(weights);

    ParamGradient grad;
    grad.per_scatterer.resize(set.size());
    const double score_weight = lambda / double(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const ScattererParams& theta = set.scatterers[i];
        for (int p = 0; p < kParamCount; ++p) {
            const ComplexField dE = scatterer_field_derivative(theta, grid, xi, p);
            double acc = 0.0;
            for (std::size_t t = 0; t < h.v.size(); ++t)
                acc += (h.v[t] * dE.v[t]).real();
            grad.per_scatterer[i][p] = acc;
        }
        const auto [sx, sy] = score_gradient(theta.x, theta.y, mask, sigma, max_score);
        grad.per_scatterer[i][kX] += score_weight * sx;
        grad.per_scatterer[i][kY] += score_weight * sy;
    }
    if (!grad.finite()) throw numerical_error("objective gradient: non-finite component");
    return grad;
}

std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x0,
    double h) {
    return finite_difference(f, x0, std::vector<double>(x0.size(), h));
}

std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x0,
    const std::vector<double>& h) {
    if (h.size() != x0.size())
        throw parameter_error("finite_difference: step count does not match dimension");
    std::vector<double> grad(x0.size());
    std::vector<double> probe = x0;
    for (std::size_t k = 0; k < x0.size(); ++k) {
        if (!(h[k] > 0.0)) throw parameter_error("finite_difference: steps must be > 0");
        probe[k] = x0[k] + h[k];
        const double fp = f(probe);
        probe[k] = x0[k] - h[k];
        const double fm = f(probe);
        probe[k] = x0[k];
        grad[k] = (fp - fm) / (2.0 * h[k]);
    }
    return grad;
}

}  // namespace otsa
