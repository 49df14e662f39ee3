#pragma once

#include "semitrace/model.hpp"
#include "semitrace/quadrature.hpp"

namespace semitrace {

namespace detail {

// Axis value of the potential (radial models are evaluated along e1).
inline double axis_value(const PotentialModel& m, double r) {
    Vec3 x{m.x0[0] + r, 0.0, 0.0};
    return m.eval(x);
}

inline double outer_turning(const PotentialModel& m, double E, double sgn) {
    double r = 0.5;
    int guard = 0;
    while (axis_value(m, sgn * r) <= E) {
        r *= 1.5;
        if (++guard > 200) throw StructuralError("potential does not confine");
    }
    double lo = r / 1.5, hi = r;
    for (int it = 0; it < 90; ++it) {
        double mid = 0.5 * (lo + hi);
        (axis_value(m, sgn * mid) <= E ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Phase-space volume Vol(E) = |{(x, xi): xi^2 + V(x) <= E}| for 1-d models
// and radial models in 2 or 3 dimensions.  The x-integral runs between
// turning points with a sine substitution so endpoint square roots stay
// smooth; everything else is Gauss-Legendre on smooth integrands.
inline double phase_space_volume(const PotentialModel& model, double E, int order = 256) {
    if (E <= model.eval(model.x0)) return 0.0;
    if (model.dims == 1) {
        const double b = detail::outer_turning(model, E, +1.0);
        const double a = -detail::outer_turning(model, E, -1.0);
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        return integrate_gl(
            [&](double th) {
                const double x = mid + half * std::sin(th);
                const double q = std::max(0.0, E - detail::axis_value(model, x));
                return 2.0 * std::sqrt(q) * half * std::cos(th);
            },
            -0.5 * kPi, 0.5 * kPi, order);
    }
    if (!model.radial) throw PreconditionError("volume in dimension >= 2 needs a radial model");
    const double rmax = detail::outer_turning(model, E, +1.0);
    if (model.dims == 2) {
        // xi-ball area pi*(E-V); integrand is a polynomial in r.
        return kTwoPi * kPi *
               integrate_gl(
                   [&](double r) {
                       return std::max(0.0, E - detail::axis_value(model, r)) * r;
                   },
                   0.0, rmax, order);
    }
    // n = 3: (4pi/3)(E-V)^{3/2} * 4pi r^2, sine substitution for the 3/2 power
    return (4.0 * kPi / 3.0) * 2.0 * kTwoPi *
           integrate_gl(
               [&](double th) {
                   const double r = rmax * 0.5 * (1.0 + std::sin(th));
                   const double q = std::max(0.0, E - detail::axis_value(model, r));
                   return std::pow(q, 1.5) * r * r * rmax * 0.5 * std::cos(th);
               },
               -0.5 * kPi, 0.5 * kPi, order);
}

// Weyl count of eigenvalues expected in [E_lo, E_hi]: phase-space volume over
// (2 pi h)^n.  Used only to bound neglected tail terms in trace sums.
inline double weyl_count_estimate(const PotentialModel& model, double h, double E_lo,
                                  double E_hi) {
    if (E_hi <= E_lo) return 0.0;
    const double v_hi = phase_space_volume(model, E_hi);
    const double v_lo = E_lo > model.eval(model.x0) ? phase_space_volume(model, E_lo) : 0.0;
    return std::max(0.0, v_hi - v_lo) / std::pow(kTwoPi * h, model.dims);
}

}  // namespace semitrace
