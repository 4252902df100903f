#include "otsa/ascm.hpp"

#include <cmath>
#include <numbers>

namespace otsa {

namespace {

constexpr double kPi = std::numbers::pi;

bool all_finite(const double* p, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

}  // namespace

bool ScattererParams::finite() const {
    auto a = to_array();
    return all_finite(a.data(), a.size());
}

bool SarImage::finite() const { return all_finite(v.data(), v.size()); }

double SarImage::max_value() const {
    double best = 0.0;
    for (double x : v) best = std::max(best, x);
    return best;
}

std::pair<int, int> SarImage::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return {int(best / n), int(best % n)};
}

ImagingParams ImagingParams::make(double bandwidth_hz, double center_freq_hz,
                                  double aperture_rad, int m_star, int n_star,
                                  double speed_of_light) {
    ImagingParams xi;
    xi.bandwidth_hz = bandwidth_hz;
    xi.center_freq_hz = center_freq_hz;
    xi.speed_of_light = speed_of_light;
    xi.aperture_rad = aperture_rad;
    xi.m_star = m_star;
    xi.n_star = n_star;
    xi.eta_x = 1.0;
    xi.eta_y = 1.0;
    xi.pixel_spacing_x = speed_of_light * xi.eta_x / (2.0 * bandwidth_hz);
    xi.pixel_spacing_y =
        speed_of_light * xi.eta_y / (4.0 * center_freq_hz * std::sin(aperture_rad / 2.0));
    xi.validate();
    return xi;
}

ImagingParams ImagingParams::with_grid(int m, int n) const {
    ImagingParams xi = *this;
    xi.m_star = m;
    xi.n_star = n;
    xi.validate();
    return xi;
}

void ImagingParams::validate() const {
    if (!(bandwidth_hz > 0.0)) throw parameter_error("imaging: bandwidth must be > 0");
    if (!(center_freq_hz > bandwidth_hz / 2.0))
        throw parameter_error("imaging: center frequency must exceed half the bandwidth");
    if (!(aperture_rad > 0.0 && aperture_rad < kPi))
        throw parameter_error("imaging: aperture angle must lie in (0, pi)");
    if (!(speed_of_light > 0.0)) throw parameter_error("imaging: speed of light must be > 0");
    if (m_star < 2 || n_star < 2)
        throw parameter_error("imaging: grid sizes must be at least 2");
    const double px = speed_of_light * eta_x / (2.0 * bandwidth_hz);
    const double py =
        speed_of_light * eta_y / (4.0 * center_freq_hz * std::sin(aperture_rad / 2.0));
    if (std::abs(pixel_spacing_x - px) > 1e-12 * px ||
        std::abs(pixel_spacing_y - py) > 1e-12 * py)
        throw parameter_error("imaging: stored pixel spacings disagree with derived values");
}

FrequencyGrid build_frequency_grid(const ImagingParams& xi) {
    xi.validate();
    FrequencyGrid g;
    g.fx.resize(xi.m_star);
    g.fy.resize(xi.n_star);
    const double fx0 = xi.center_freq_hz - xi.bandwidth_hz / 2.0;
    const double dfx = xi.bandwidth_hz / double(xi.m_star - 1);
    for (int k = 0; k < xi.m_star; ++k) g.fx[k] = fx0 + k * dfx;
    const double extent = 2.0 * xi.center_freq_hz * std::sin(xi.aperture_rad / 2.0);
    const double fy0 = -extent / 2.0;
    const double dfy = extent / double(xi.n_star - 1);
    for (int l = 0; l < xi.n_star; ++l) g.fy[l] = fy0 + l * dfy;
    return g;
}

double sinc(double u) {
    if (std::abs(u) < 1e-8) return 1.0 - u * u / 6.0;
    return std::sin(u) / u;
}

double sinc_derivative(double u) {
    if (std::abs(u) < 1e-4) return -u / 3.0 + u * u * u / 30.0;
    return std::cos(u) / u - std::sin(u) / (u * u);
}

ComplexField scatterer_field(const ScattererParams& theta, const FrequencyGrid& grid,
                             const ImagingParams& xi) {
    if (!theta.finite()) throw parameter_error("scatterer: non-finite parameter value");
    const int m = int(grid.fx.size());
    const int n = int(grid.fy.size());
    ComplexField field(m, n);

    const double fc = xi.center_freq_hz;
    const double half_aperture = xi.aperture_rad / 2.0;
    const double length_coeff = kPi / (2.0 * std::sin(half_aperture)) * theta.length * xi.eta_y;
    const double orient = theta.phi_bar * half_aperture;
    const double c4 = 4.0 * kPi / xi.speed_of_light;
    const double px_x = xi.pixel_spacing_x * theta.x;
    const double py_y = xi.pixel_spacing_y * theta.y;

    for (int k = 0; k < m; ++k) {
        const double fx = grid.fx[k];
        const double phase_x = px_x * fx;
        for (int l = 0; l < n; ++l) {
            const double fy = grid.fy[l];
            const double r = std::hypot(fx, fy);
            const double ratio = r / fc;

            // (j*r/fc)^alpha, principal branch; r = 0 gives 0 for alpha > 0,
            // 1 for alpha = 0.
            std::complex<double> freq_dep;
            if (r == 0.0) {
                freq_dep = theta.alpha == 0.0 ? 1.0 : 0.0;
            } else {
                freq_dep = std::polar(std::pow(ratio, theta.alpha), theta.alpha * kPi / 2.0);
            }
            const double aspect = std::exp(-(fy / fc) * theta.gamma);
            const double psi = std::atan2(fy, fx);
            const double taper = sinc(length_coeff * ratio * std::sin(psi - orient));
            const std::complex<double> ramp = std::polar(1.0, -(c4 * (phase_x + py_y * fy)));
            field.at(k, l) = theta.amplitude * aspect * taper * freq_dep * ramp;
        }
    }
    return field;
}

ComplexField total_field(const ScattererSet& set, const FrequencyGrid& grid,
                         const ImagingParams& xi) {
    ComplexField sum(int(grid.fx.size()), int(grid.fy.size()));
    for (const ScattererParams& theta : set.scatterers) {
        ComplexField one = scatterer_field(theta, grid, xi);
        for (std::size_t i = 0; i < sum.v.size(); ++i) sum.v[i] += one.v[i];
    }
    return sum;
}

CenteredIdft::CenteredIdft(int m, int n) : m_(m), n_(n) {
    if (m < 2 || n < 2) throw parameter_error("idft: grid sizes must be at least 2");
    roots_m_.resize(m - 1);
    for (int t = 0; t < m - 1; ++t)
        roots_m_[t] = std::polar(1.0, 2.0 * kPi * t / double(m - 1));
    roots_n_.resize(n - 1);
    for (int t = 0; t < n - 1; ++t)
        roots_n_[t] = std::polar(1.0, 2.0 * kPi * t / double(n - 1));
}

// Separable evaluation: T[a,l] = sum_k w_m^(ak) E[k,l], then
// z[a,b] = sum_l T[a,l] w_n^(bl). The integer (a*k) mod (m-1) indexing keeps
// the kernel exact, so row m-1 and column n-1 duplicate row/column 0
// bit-for-bit (the kernel is (m-1)-periodic over m samples).
ComplexField CenteredIdft::apply(const ComplexField& field) const {
    if (field.m != m_ || field.n != n_)
        throw parameter_error("idft: field dimensions do not match the transform");
    const int mod_m = m_ - 1;
    const int mod_n = n_ - 1;
    ComplexField tmp(m_, n_);
    for (int a = 0; a < m_; ++a) {
        for (int k = 0; k < m_; ++k) {
            const std::complex<double> w = roots_m_[(a * k) % mod_m];
            const std::complex<double>* row = &field.v[std::size_t(k) * n_];
            std::complex<double>* out = &tmp.v[std::size_t(a) * n_];
            for (int l = 0; l < n_; ++l) out[l] += w * row[l];
        }
    }
    ComplexField z(m_, n_);
    const double norm = 1.0 / (double(m_) * double(n_));
    for (int a = 0; a < m_; ++a) {
        const std::complex<double>* row = &tmp.v[std::size_t(a) * n_];
        for (int b = 0; b < n_; ++b) {
            std::complex<double> acc = 0.0;
            for (int l = 0; l < n_; ++l) acc += row[l] * roots_n_[(b * l) % mod_n];
            z.at(a, b) = acc * norm;
        }
    }
    return z;
}

ComplexField CenteredIdft::adjoint(const ComplexField& pixel_weights) const {
    if (pixel_weights.m != m_ || pixel_weights.n != n_)
        throw parameter_error("idft: weight dimensions do not match the transform");
    const int mod_m = m_ - 1;
    const int mod_n = n_ - 1;
    ComplexField tmp(m_, n_);
    for (int k = 0; k < m_; ++k) {
        for (int a = 0; a < m_; ++a) {
            const std::complex<double> w = roots_m_[(a * k) % mod_m];
            const std::complex<double>* row = &pixel_weights.v[std::size_t(a) * n_];
            std::complex<double>* out = &tmp.v[std::size_t(k) * n_];
            for (int b = 0; b < n_; ++b) out[b] += w * row[b];
        }
    }
    ComplexField h(m_, n_);
    const double norm = 1.0 / (double(m_) * double(n_));
    for (int k = 0; k < m_; ++k) {
        const std::complex<double>* row = &tmp.v[std::size_t(k) * n_];
        for (int l = 0; l < n_; ++l) {
            std::complex<double> acc = 0.0;
            for (int b = 0; b < n_; ++b) acc += row[b] * roots_n_[(b * l) % mod_n];
            h.at(k, l) = acc * norm;
        }
    }
    return h;
}

SarImage magnitude(const ComplexField& z) {
    SarImage img(z.m, z.n);
    for (std::size_t i = 0; i < z.v.size(); ++i) img.v[i] = std::abs(z.v[i]);
    return img;
}

ComplexField render_complex(const ScattererSet& set, const ImagingParams& xi) {
    xi.validate();
    const FrequencyGrid grid = build_frequency_grid(xi);
    const ComplexField field = total_field(set, grid, xi);
    return CenteredIdft(xi.m_star, xi.n_star).apply(field);
}

SarImage render_image(const ScattererSet& set, const ImagingParams& xi) {
    return magnitude(render_complex(set, xi));
}

}  // namespace otsa
