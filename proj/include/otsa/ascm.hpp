#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

#include "otsa/common.hpp"

namespace otsa {

inline constexpr int kParamCount = 7;

// Index of each scatterer parameter in bound vectors, gradients and the CLI
// --params order.
enum ParamIndex : int {
    kAmplitude = 0,
    kX = 1,
    kY = 2,
    kGamma = 3,
    kLength = 4,
    kAlpha = 5,
    kPhiBar = 6,
};

// One scatterer: amplitude, range/cross-range position (pixels), aspect
// dependence, length (cross-range pixels), frequency dependence, orientation
// (in units of half the aperture angle).
struct ScattererParams {
    double amplitude = 0.0;
    double x = 0.0;
    double y = 0.0;
    double gamma = 0.0;
    double length = 0.0;
    double alpha = 0.0;
    double phi_bar = 0.0;

    std::array<double, kParamCount> to_array() const {
        return {amplitude, x, y, gamma, length, alpha, phi_bar};
    }
    static ScattererParams from_array(const std::array<double, kParamCount>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
    }
    bool finite() const;
};

struct ScattererSet {
    std::vector<ScattererParams> scatterers;

    std::size_t size() const { return scatterers.size(); }
    bool empty() const { return scatterers.empty(); }
};

// SAR imaging constants. Grid sizes are the image dimensions (the field is
// evaluated directly on the Cartesian grid, so m = m*, n = n* and the
// resampling factors are 1).
struct ImagingParams {
    double bandwidth_hz = 0.591e9;       // B
    double center_freq_hz = 9.6e9;       // f_c
    double speed_of_light = 299792458.0; // c
    double aperture_rad = 0.05;          // phi_m
    int m_star = 128;                    // samples along f_x / range pixels
    int n_star = 128;                    // samples along f_y / cross-range pixels
    double eta_x = 1.0;
    double eta_y = 1.0;
    double pixel_spacing_x = 0.0;        // p_x = c*eta_x/(2B)
    double pixel_spacing_y = 0.0;        // p_y = c*eta_y/(4 f_c sin(phi_m/2))

    // Fills p_x/p_y from the other fields.
    static ImagingParams make(double bandwidth_hz, double center_freq_hz,
                              double aperture_rad, int m_star, int n_star,
                              double speed_of_light = 299792458.0);
    static ImagingParams defaults() { return make(0.591e9, 9.6e9, 0.05, 128, 128); }

    // Same constants on a different grid (classifier-sized renders).
    ImagingParams with_grid(int m, int n) const;

    // Throws parameter_error unless B > 0, f_c > B/2, 0 < phi_m < pi,
    // grid sizes >= 2 and the stored pixel spacings match the derived ones
    // to 1e-12 relative.
    void validate() const;
};

// Uniform frequency sample values; f_x centered on f_c, f_y centered on 0.
struct FrequencyGrid {
    std::vector<double> fx;  // m_star samples
    std::vector<double> fy;  // n_star samples
};

struct ComplexField {
    int m = 0;
    int n = 0;
    std::vector<std::complex<double>> v;  // row-major, v[k*n + l]

    ComplexField() = default;
    ComplexField(int m_, int n_) : m(m_), n(n_), v(std::size_t(m_) * n_) {}
    std::complex<double>& at(int k, int l) { return v[std::size_t(k) * n + l]; }
    const std::complex<double>& at(int k, int l) const { return v[std::size_t(k) * n + l]; }
};

// Real image grid, row-major with x indexing rows (range) and y indexing
// columns (cross-range). Doubles as the pixel-gradient carrier.
struct SarImage {
    int m = 0;  // rows (range)
    int n = 0;  // columns (cross-range)
    std::vector<double> v;

    SarImage() = default;
    SarImage(int m_, int n_, double fill = 0.0) : m(m_), n(n_), v(std::size_t(m_) * n_, fill) {}
    double& at(int x, int y) { return v[std::size_t(x) * n + y]; }
    const double& at(int x, int y) const { return v[std::size_t(x) * n + y]; }
    bool same_shape(const SarImage& o) const { return m == o.m && n == o.n; }
    bool finite() const;
    double max_value() const;
    // First (row-major) strict maximum.
    std::pair<int, int> argmax() const;
};

using PixelGradient = SarImage;

// f_x[k] = f_c - B/2 + k*B/(m*-1); f_y[l] = -F/2 + l*F/(n*-1) with
// F = 2 f_c sin(phi_m/2). This spacing makes the Eq. position ramp an exact
// (m*-1)-periodic phase, so an integer-coordinate scatterer lands on one
// pixel after the centered inverse transform.
FrequencyGrid build_frequency_grid(const ImagingParams& xi);

// unnormalized sinc: sin(u)/u, 1 at 0.
double sinc(double u);
double sinc_derivative(double u);

// Per-scatterer frequency-domain field: the product of the frequency
// dependence (j*sqrt(fx^2+fy^2)/f_c)^alpha (principal branch), the aspect
// decay exp(-(fy/f_c)*gamma), the length taper
// sinc(pi*(sqrt(fx^2+fy^2)/f_c)/(2 sin(phi_m/2)) * L*eta_y *
//      sin(atan2(fy,fx) - phi_bar*phi_m/2)),
// and the position ramp exp(-j*4pi/c*(p_x*x*fx + p_y*y*fy)), scaled by the
// amplitude.
ComplexField scatterer_field(const ScattererParams& theta, const FrequencyGrid& grid,
                             const ImagingParams& xi);

// Entry-wise sum of scatterer_field over all members.
ComplexField total_field(const ScattererSet& set, const FrequencyGrid& grid,
                         const ImagingParams& xi);

// Precomputed centered inverse transform for an m* x n* grid:
//   z[a,b] = sum_{k,l} E[k,l] * w_m^(a*k) * w_n^(b*l),  w_m = exp(+j*2pi/(m*-1)),
// normalized by 1/(m* n*). Kernel phases come from an integer (a*k) mod (m*-1)
// root table, so the transform is exact at integer pixel offsets.
class CenteredIdft {
  public:
    CenteredIdft(int m, int n);

    // z (normalized) from a frequency field.
    ComplexField apply(const ComplexField& field) const;
    // Adjoint contraction: H[k,l] = (1/(m n)) * sum_{a,b} h[a,b] w_m^(ak) w_n^(bl).
    // Same (unconjugated) kernel, used to pull pixel-space sensitivities back
    // onto the frequency grid.
    ComplexField adjoint(const ComplexField& pixel_weights) const;

    int m() const { return m_; }
    int n() const { return n_; }

  private:
    int m_, n_;
    std::vector<std::complex<double>> roots_m_;  // m-1 roots of unity
    std::vector<std::complex<double>> roots_n_;
};

// |centered IDFT(total_field)| / (m* n*): real, non-negative, with a matched
// unit-amplitude point scatterer peaking at exactly 1.
SarImage render_image(const ScattererSet& set, const ImagingParams& xi);

// Pre-magnitude complex image for the same render (shared by the gradient
// engine, which needs conj(z)/|z| factors).
ComplexField render_complex(const ScattererSet& set, const ImagingParams& xi);

SarImage magnitude(const ComplexField& z);

}  // namespace otsa
