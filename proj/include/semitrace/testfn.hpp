#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semitrace/interp.hpp"
#include "semitrace/quadrature.hpp"
#include "semitrace/taylor.hpp"

namespace semitrace {

// ---------------------------------------------------------------------------
// Fourier convention, fixed here and nowhere else:
//
//     forward:   f_hat(w) = integral f(t) exp(-i w t) dt
//     inverse:   f(s)     = (2 pi)^{-1} integral f_hat(t) exp(+i s t) dt
//
// Smooth compactly supported integrands are integrated with Gauss-Legendre
// panels sized so each panel sees at most a few radians of phase.
// ---------------------------------------------------------------------------

inline constexpr int kFourierPanelOrder = 24;
inline constexpr double kFourierPanelPhase = 5.0;  // max radians per panel

template <typename Fn>
std::complex<double> fourier_forward_compact(Fn&& f, double a, double b, double omega) {
    const double width = b - a;
    if (width <= 0.0) return {0.0, 0.0};
    // the floor of 8 panels resolves bump profiles, whose analyticity radius
    // shrinks toward the support endpoints
    int panels = std::max(8, 1 + static_cast<int>(std::abs(omega) * width / kFourierPanelPhase));
    panels = std::min(panels, 2000000);
    const GaussLegendre& g = gauss_legendre(kFourierPanelOrder);
    std::complex<double> sum{0.0, 0.0};
    const double dw = width / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * dw;
        const double mid = lo + 0.5 * dw;
        for (int i = 0; i < kFourierPanelOrder; ++i) {
            const double t = mid + 0.5 * dw * g.x[i];
            const double ph = -omega * t;
            sum += (0.5 * dw * g.w[i]) * f(t) * std::complex<double>(std::cos(ph), std::sin(ph));
        }
    }
    return sum;
}

// Real cosine transform of an even function given on [0,b]:
// integral_{-b}^{b} f(t) cos(w t) dt = 2 integral_0^b f(t) cos(w t) dt.
template <typename Fn>
double cosine_transform_even(Fn&& f, double b, double omega, int extra_panels = 0) {
    int panels = std::max(6, 1 + extra_panels +
                                 static_cast<int>(std::abs(omega) * b / kFourierPanelPhase));
    const GaussLegendre& g = gauss_legendre(kFourierPanelOrder);
    double sum = 0.0;
    const double dw = b / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = p * dw + 0.5 * dw;
        for (int i = 0; i < kFourierPanelOrder; ++i) {
            const double t = mid + 0.5 * dw * g.x[i];
            sum += (0.5 * dw * g.w[i]) * f(t) * std::cos(omega * t);
        }
    }
    return 2.0 * sum;
}

// ---------------------------------------------------------------------------
// CompactBump: scale * P(y) * exp(-1/(1-u^2)), u = (y-center)/halfwidth.
// The polynomial factor lets amplitudes vanish to prescribed order at points
// of interest.  Derivatives at a point are exact (Taylor-jet arithmetic).
// ---------------------------------------------------------------------------

struct CompactBump {
    double center = 0.0;
    double halfwidth = 1.0;
    double scale = 1.0;
    std::vector<double> poly;  // P(y) = sum poly[i] * y^i; empty means P = 1

    double support_lo() const { return center - halfwidth; }
    double support_hi() const { return center + halfwidth; }

    double value(double y) const {
        const double u = (y - center) / halfwidth;
        if (std::abs(u) >= 1.0) return 0.0;
        double p = poly.empty() ? 1.0 : 0.0;
        double yp = 1.0;
        for (double c : poly) { p += c * yp; yp *= y; }
        return scale * p * std::exp(-1.0 / (1.0 - u * u));
    }

    // m-th derivative at y, exact up to roundoff.
    double derivative_at(double y, int m) const {
        const double u = (y - center) / halfwidth;
        if (std::abs(u) >= 1.0) return 0.0;
        Jet uj = Jet::variable(u, m);
        uj.c[0] = u;
        if (m >= 1) uj.c[1] = 1.0 / halfwidth;  // d/dy of u
        Jet one_minus = 1.0 - uj * uj;
        Jet arg = -1.0 * reciprocal(one_minus);
        Jet bump = exp(arg);
        Jet pj = Jet::constant(poly.empty() ? 1.0 : 0.0, m);
        if (!poly.empty()) {
            Jet yj = Jet::variable(y, m);
            Jet acc = Jet::constant(1.0, m);
            for (double c : poly) {
                pj = pj + c * acc;
                acc = acc * yj;
            }
        }
        Jet total = scale * (pj * bump);
        return total.derivative(m);
    }

    std::complex<double> transform(double omega) const {
        return fourier_forward_compact([this](double t) { return value(t); },
                                       support_lo(), support_hi(), omega);
    }

    bool even() const {
        if (center != 0.0) return false;
        for (std::size_t i = 1; i < poly.size(); i += 2)
            if (poly[i] != 0.0) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// TestFunction: Schwartz phi with smooth compactly supported transform.
//
// profile "bump":      phi_hat(t) = c * exp(-1/(1-(t/T)^2)) on (-T,T)
// profile "autocorr":  phi_hat(t) = c * (psi(*)psi)(2t/T), psi the unit bump;
//                      phi >= 0 pointwise, used where positivity matters.
// ---------------------------------------------------------------------------

enum class BumpProfile { bump, autocorr };

inline std::string profile_name(BumpProfile p) {
    return p == BumpProfile::bump ? "bump" : "autocorr";
}

inline BumpProfile profile_from_name(const std::string& s) {
    if (s == "bump") return BumpProfile::bump;
    if (s == "autocorr") return BumpProfile::autocorr;
    throw ConfigError("unknown test-function profile '" + s + "'");
}

class TestFunction {
public:
    BumpProfile profile = BumpProfile::bump;
    double band_radius = 1.0;  // T: support of phi_hat is [-T, T]
    double scale = 1.0;        // c
    int quad_order = 64;       // base order for the inverse transform

    TestFunction() = default;
    TestFunction(BumpProfile p, double T, double c, int order = 64)
        : profile(p), band_radius(T), scale(c), quad_order(order) {
        if (T <= 0.0) throw StructuralError("band radius must be positive");
    }

    double eval_hat(double t) const {
        const double u = t / band_radius;
        if (std::abs(u) >= 1.0) return 0.0;
        if (profile == BumpProfile::bump) return scale * std::exp(-1.0 / (1.0 - u * u));
        // autocorrelation of the unit bump at lag 2u, overlap [2u-1, 1] for u>0
        const double tau = 2.0 * std::abs(u);
        const double lo = tau - 1.0;
        if (lo >= 1.0) return 0.0;
        return scale * integrate_gl(
                           [&](double v) {
                               const double w = v - tau;
                               if (std::abs(v) >= 1.0 || std::abs(w) >= 1.0) return 0.0;
                               return std::exp(-1.0 / (1.0 - v * v) - 1.0 / (1.0 - w * w));
                           },
                           lo, 1.0, 48);
    }

    // phi(s) by quadrature over supp(phi_hat); converged value or throws.
    // phi_hat is even, so the inverse transform reduces to a cosine integral
    // and the imaginary part vanishes identically.
    double eval_phi(double s) const {
        const double v1 = phi_once(s, 0);
        const double v2 = phi_once(s, 2);  // two extra panels ~ order doubling
        if (std::abs(v1 - v2) > 1e-10 * std::max(1.0, phi_zero()))
            throw AccuracyError("inverse-transform quadrature did not converge at s = " + fmt_g(s, 6));
        return v2;
    }

    double phi_zero() const {
        if (!phi0_) phi0_ = phi_once(0.0, 2);
        return *phi0_;
    }

    // sup |phi| = phi(0) because phi_hat >= 0 for both profiles.
    double phi_sup() const { return phi_zero(); }

    // Smallest grid point s_max of a geometric scan with sampled sup of |phi|
    // beyond it <= tol.  Deterministic grid; monotone in tol by construction.
    double tail_cutoff(double tol) const {
        if (tol <= 0.0) throw PreconditionError("tail cutoff tolerance must be positive");
        if (phi_sup() <= tol) return 0.0;
        const double s0 = 0.5, ratio = 1.035, hard = 1e6;
        const int lookahead = 48;
        std::vector<double> vals;
        double s = s0;
        int run = 0;
        while (s < hard) {
            const double v = std::abs(phi_once(s, 1));
            if (v <= tol) {
                if (++run > lookahead) {
                    // first index of the run is the reported cutoff
                    return s / std::pow(ratio, lookahead);
                }
            } else {
                run = 0;
            }
            s *= ratio;
        }
        throw AccuracyError("test function decay too slow: no tail cutoff below 1e6");
    }

    // Certified fast evaluator for |s| <= s_max: one global Chebyshev
    // expansion in sigma = sqrt(|s|) (the oscillation is uniform in sigma,
    // and a single interval keeps the proxy analytic for the quadratures
    // built on top of it), verified against the quadrature path.  This is
    // the same pointwise quadrature value, cached; spectral sums call it
    // millions of times.
    PiecewiseChebyshev phi_proxy(double s_max, double verify_tol = 1e-11) const {
        const double sig_max = std::sqrt(std::max(s_max, 4.0)) + 0.5;
        auto f = [this](double sig) { return phi_once(sig * sig, 1); };
        int degree = 64 + static_cast<int>(10.0 * sig_max * std::max(1.0, std::sqrt(band_radius)));
        for (;;) {
            PiecewiseChebyshev p = PiecewiseChebyshev::build(f, 0.0, sig_max, 1, degree);
            const double dev = p.verify(f, 2 * degree + 1);
            if (dev <= verify_tol * std::max(1.0, phi_zero())) return p;
            if (degree > 4000)
                throw AccuracyError("phi proxy verification failed: deviation " + fmt_g(dev, 4));
            degree = degree * 3 / 2;
        }
    }

    std::string str() const {
        return profile_name(profile) + "(T=" + fmt_g(band_radius, 6) + ", c=" + fmt_g(scale, 6) +
               ", order=" + std::to_string(quad_order) + ")";
    }

private:
    mutable std::optional<double> phi0_;

    double phi_once(double s, int extra_panels) const {
        s = std::abs(s);
        if (profile == BumpProfile::autocorr) {
            // phi_hat = c*(psi*psi)(2t/T)  =>  phi(s) = (cT/4pi) * psi_hat(sT/2)^2
            const double sig = s * band_radius / 2.0;
            const double ph = cosine_transform_even(
                [](double v) { return v >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - v * v)); }, 1.0, sig,
                extra_panels);
            return scale * band_radius / (4.0 * kPi) * ph * ph;
        }
        const int base_extra = std::max(0, quad_order / kFourierPanelOrder - 1);
        return (0.5 / kPi) * cosine_transform_even([this](double t) { return eval_hat(t); },
                                                   band_radius, s, extra_panels + base_extra);
    }
};

}  // namespace semitrace
