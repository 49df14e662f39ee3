#pragma once

#include <string>

#include "semitrace/dynamics.hpp"
#include "semitrace/lsq.hpp"
#include "semitrace/rational.hpp"
#include "semitrace/trace.hpp"

namespace semitrace {

// ---------------------------------------------------------------------------
// Leading-term prediction at a degenerate minimum of order k in n dimensions:
//
//   gamma ~ h^{-n + n/2 + n/k} * Lambda00,
//   Lambda00 = S(S^{n-1})/(2 pi)^n * int_{S^{n-1}} |V_k|^{-n/k}
//              * int_{R_+^2} phi(u^2 + v^k) u^{n-1} v^{n-1} du dv,
//
// and, equivalently, Lambda00 = (2 pi)^{-n} int phi(xi^2 + V_k(x)) dx dxi.
// The two routes share no sphere-measure or Jacobian conventions, so their
// agreement certifies both.
// ---------------------------------------------------------------------------

struct LeadingTermPrediction {
    int n = 1;
    int k = 4;
    Rational exponent;       // -n + n/2 + n/k, exact
    double lambda00 = 0.0;
    std::string method;      // "polar" | "phase_space"
    double quad_error = 0.0; // order-refinement delta
};

namespace detail {

// Order-doubling Gauss-Legendre estimate with error control.
template <typename Fn>
double gl2_refined(Fn&& f, double ax, double bx, double ay, double by, int order,
                   double* err_out) {
    auto eval = [&](int q) {
        const GaussLegendre& g = gauss_legendre(q);
        double sum = 0.0;
        for (int i = 0; i < q; ++i) {
            const double x = 0.5 * (ax + bx) + 0.5 * (bx - ax) * g.x[i];
            double row = 0.0;
            for (int j = 0; j < q; ++j) {
                const double y = 0.5 * (ay + by) + 0.5 * (by - ay) * g.x[j];
                row += g.w[j] * f(x, y);
            }
            sum += g.w[i] * row;
        }
        return sum * 0.25 * (bx - ax) * (by - ay);
    };
    const double v1 = eval(order);
    const double v2 = eval(order * 3 / 2);
    if (err_out) *err_out = std::abs(v1 - v2);
    return v2;
}

}  // namespace detail

struct PredictionOptions {
    double tail_tol_rel = 1e-13;  // phi tail cutoff for the integration box
    int base_order = 240;         // 2-d Gauss-Legendre order (refined at 1.5x)
    SphereQuadratureSpec sphere;
};

// int_{R_+^2} phi(u^2 + v^k) u^{n-1} v^{n-1} du dv with certified cutoffs.
template <typename PhiFn>
double uv_profile_integral(PhiFn&& phi, int n, int k, double s_max, int order, double* err_out) {
    const double U = std::sqrt(s_max);
    const double V = std::pow(s_max, 1.0 / k);
    return detail::gl2_refined(
        [&](double u, double v) {
            const double s = u * u + std::pow(v, k);
            double w = phi(s);
            for (int i = 1; i < n; ++i) w *= u * v;
            return w;
        },
        0.0, U, 0.0, V, order, err_out);
}

inline LeadingTermPrediction leading_coefficient_polar(const PotentialModel& model,
                                                       const TestFunction& tf,
                                                       const PredictionOptions& opt = {}) {
    LeadingTermPrediction out;
    out.n = model.dims;
    out.k = model.germ_degree();
    out.exponent = leading_exponent(out.n, out.k);
    out.method = "polar";
    const HomogeneousForm vk = model.leading_form();
    const double sphere = sphere_integral(vk, -static_cast<double>(out.n) / out.k, opt.sphere);
    const double s_max = tf.tail_cutoff(opt.tail_tol_rel * tf.phi_sup());
    PiecewiseChebyshev proxy = tf.phi_proxy(s_max * 1.02 + 1.0);
    double uv_err = 0.0;
    const double uv = uv_profile_integral([&](double s) { return proxy(std::sqrt(s)); }, out.n,
                                          out.k, s_max, opt.base_order, &uv_err);
    out.lambda00 = sphere_surface(out.n) / std::pow(kTwoPi, out.n) * sphere * uv;
    out.quad_error = sphere_surface(out.n) / std::pow(kTwoPi, out.n) * sphere * uv_err;
    if (out.quad_error > 1e-7 * std::abs(out.lambda00))
        throw AccuracyError("polar coefficient quadrature not converged");
    return out;
}

// Phase-space integral int int phifn(xi^2 + V(x)) dx dxi over the region where
// the argument stays below arg_cap.  Never uses the |V_k|^{-n/k} sphere
// factorization, so it is an independent route to the same coefficient.
template <typename PhiFn>
double phase_space_integral(const HomogeneousForm& vk, PhiFn&& phifn, double arg_cap, int order,
                            double* err_out) {
    const int n = vk.dims;
    const int k = vk.degree;
    // box containing {V_k <= arg_cap}
    const double vmin = vk.min_on_sphere();
    if (vmin <= 0.0) throw DefinitenessError("phase-space integral needs a definite form");
    const double X = std::pow(arg_cap / vmin, 1.0 / k);
    const double Xi = std::sqrt(arg_cap);

    if (n == 1) {
        // integrand even in both variables
        return 4.0 * detail::gl2_refined(
                         [&](double x, double xi) {
                             return phifn(xi * xi + vk.value(Vec3{x, 0.0, 0.0}));
                         },
                         0.0, X, 0.0, Xi, order, err_out);
    }
    if (n == 2) {
        // xi-plane reduces by area: int_{R^2} f(|xi|^2) dxi = pi int_0^inf f(rho) drho.
        // V_k(-x) = V_k(x), so the x-plane folds onto x1 >= 0.
        double worst = 0.0;
        auto inner = [&](double x1, double x2, int ord) {
            double e = 0.0;
            const GaussLegendre& g = gauss_legendre(ord);
            double sum = 0.0;
            const double v = vk.value(Vec3{x1, x2, 0.0});
            for (int i = 0; i < ord; ++i) {
                const double rho = 0.5 * arg_cap * (1.0 + g.x[i]);
                sum += 0.5 * arg_cap * g.w[i] * phifn(rho + v);
            }
            (void)e;
            return sum;
        };
        const double val = 2.0 * kPi *
                           detail::gl2_refined(
                               [&](double x1, double x2) { return inner(x1, x2, 96); }, 0.0, X,
                               -X, X, order, &worst);
        if (err_out) *err_out = worst * 2.0 * kPi;
        return val;
    }
    // n = 3, radial only: both radial reductions with explicit surfaces
    // (2 pi int sqrt(rho) f via rho = sigma^2, and 4 pi int r^2 f).
    double e2 = 0.0;
    const double val = 2.0 * kTwoPi * 2.0 * kPi *
                       detail::gl2_refined(
                           [&](double sig, double r) {
                               return 2.0 * sig * sig * r * r *
                                      phifn(sig * sig + vk.value(Vec3{r, 0.0, 0.0}));
                           },
                           0.0, Xi, 0.0, X, order, &e2);
    if (err_out) *err_out = e2 * 2.0 * kTwoPi * 2.0 * kPi;
    return val;
}

inline LeadingTermPrediction leading_coefficient_phase_space(const PotentialModel& model,
                                                             const TestFunction& tf,
                                                             const PredictionOptions& opt = {}) {
    LeadingTermPrediction out;
    out.n = model.dims;
    out.k = model.germ_degree();
    out.exponent = leading_exponent(out.n, out.k);
    out.method = "phase_space";
    const HomogeneousForm vk = model.leading_form();
    if (out.n == 3 && !model.radial)
        throw PreconditionError("phase-space route in dimension 3 requires a radial form");
    const double s_max = tf.tail_cutoff(opt.tail_tol_rel * tf.phi_sup());
    PiecewiseChebyshev proxy = tf.phi_proxy(s_max * 1.02 + 1.0);
    double err = 0.0;
    const double integral = phase_space_integral(
        vk, [&](double s) { return s > s_max ? 0.0 : proxy(std::sqrt(s)); }, s_max,
        opt.base_order, &err);
    out.lambda00 = integral / std::pow(kTwoPi, out.n);
    out.quad_error = err / std::pow(kTwoPi, out.n);
    if (out.quad_error > 1e-6 * std::max(std::abs(out.lambda00), 1e-300))
        throw AccuracyError("phase-space coefficient quadrature not converged");
    return out;
}

// ---------------------------------------------------------------------------
// Exact scaling identity for homogeneous germs:
//   int phi((xi^2+V_k)/h) = h^{n/2+n/k} int phi(xi^2+V_k).
// Any numerical difference is quadrature error.
// ---------------------------------------------------------------------------

struct ScalingCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_diff = 0.0;
};

inline ScalingCheck weyl_scaling_check(const PotentialModel& model, const TestFunction& tf,
                                       double h, const PredictionOptions& opt = {}) {
    if (model.germ.degrees_present().size() != 1)
        throw PreconditionError("scaling identity needs a homogeneous germ");
    const int n = model.dims;
    const int k = model.germ_degree();
    const HomogeneousForm vk = model.leading_form();
    const double s_max = tf.tail_cutoff(opt.tail_tol_rel * tf.phi_sup());
    PiecewiseChebyshev proxy = tf.phi_proxy(s_max * 1.02 + 1.0);
    auto phi = [&](double s) { return s > s_max ? 0.0 : proxy(std::sqrt(s)); };
    double e1 = 0.0, e2 = 0.0;
    ScalingCheck out;
    out.lhs = phase_space_integral(vk, [&](double s) { return phi(s / h); }, h * s_max,
                                   opt.base_order, &e1);
    const double plain = phase_space_integral(vk, phi, s_max, opt.base_order, &e2);
    out.rhs = std::pow(h, 0.5 * n + static_cast<double>(n) / k) * plain;
    out.rel_diff = std::abs(out.lhs - out.rhs) / std::max(std::abs(out.rhs), 1e-300);
    return out;
}

// ---------------------------------------------------------------------------
// Regular-level estimate.
//
// With the Fourier convention fixed in testfn.hpp (phi_hat(0) = int phi), the
// smoothed sum at a regular energy obeys
//   gamma(E, h, phi) = (2 pi h)^{1-n} (2 pi)^{-1} phi_hat(0) LVol(Sigma_E) (1 + O(h)),
// LVol = d/dE Vol(E).  (Closed-form check: V = x^2 gives gamma = phi_hat(0)/2
// for every h, and LVol = pi.)
// ---------------------------------------------------------------------------

struct RegularLevelPrediction {
    double value = 0.0;
    double lvol = 0.0;
    double lvol_err = 0.0;
    double min_period = 0.0;
};

inline RegularLevelPrediction regular_level_prediction(const PotentialModel& model, double E,
                                                       const TestFunction& tf, double h) {
    if (model.dims != 1)
        throw PreconditionError("regular-level prediction implemented for 1-d models");
    // E must be regular: |grad p|^2 = 4(E - V) + V'^2 bounded below on Sigma_E
    const double b = detail::outer_turning(model, E, +1.0);
    const double a = -detail::outer_turning(model, E, -1.0);
    double min_grad = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 400; ++i) {
        const double x = a + (b - a) * i / 400.0;
        Vec3 xv{x, 0.0, 0.0};
        const double q = std::max(0.0, E - model.eval(xv));
        const double vp = model.eval_gradient(xv)[0];
        min_grad = std::min(min_grad, 4.0 * q + vp * vp);
    }
    if (min_grad < 1e-8)
        throw PreconditionError("energy " + fmt_g(E, 6) + " is not regular: |grad p| ~ " +
                                fmt_g(std::sqrt(min_grad), 3) + " on the energy surface");

    RegularLevelPrediction out;
    out.min_period = period(model, E);
    if (tf.band_radius >= out.min_period)
        throw PreconditionError("band radius " + fmt_g(tf.band_radius, 6) +
                                " must be below the minimal period " + fmt_g(out.min_period, 6) +
                                " at E = " + fmt_g(E, 6));

    // LVol by central differencing of the phase-space volume, Richardson-checked
    const double d = 1e-3 * std::max(std::abs(E), 1.0);
    auto diff = [&](double dd) {
        return (phase_space_volume(model, E + dd) - phase_space_volume(model, E - dd)) /
               (2.0 * dd);
    };
    const double d1 = diff(d), d2 = diff(d / 2.0);
    out.lvol = (4.0 * d2 - d1) / 3.0;
    out.lvol_err = std::abs(d2 - d1) / 3.0;
    out.value = std::pow(kTwoPi * h, 1.0 - model.dims) * (0.5 / kPi) * tf.eval_hat(0.0) * out.lvol;
    return out;
}

// ---------------------------------------------------------------------------
// Fits of measured trace curves against the predicted expansion
// ---------------------------------------------------------------------------

struct FitResult {
    double leading_exponent = 0.0;         // exponent used (or fitted, in free mode)
    bool free_exponent = false;
    std::vector<double> correction_exponents;
    double amplitude = 0.0;                // A, the leading coefficient estimate
    std::vector<double> corrections;       // B_m
    double residual_norm = 0.0;
    double condition = 0.0;
    double h_min = 0.0, h_max = 0.0;
};

// gamma(h) = h^p (A + sum B_m h^{e_m}) with p fixed from (n,k) and e_m the
// smallest lattice exponents {j/2 + l/k}.
inline FitResult fit_leading(const std::vector<TraceSample>& samples, int n, int k,
                             int n_corrections) {
    const int m = static_cast<int>(samples.size());
    if (m < n_corrections + 2)
        throw PreconditionError("need at least n_corrections + 2 samples");
    FitResult out;
    out.leading_exponent = leading_exponent(n, k).value();
    std::vector<Rational> ex = correction_exponents(k, n_corrections);
    std::vector<std::vector<double>> cols(1 + n_corrections, std::vector<double>(m, 1.0));
    std::vector<double> rhs(m);
    out.h_min = samples.front().h;
    out.h_max = samples.front().h;
    for (int i = 0; i < m; ++i) {
        const double h = samples[i].h;
        out.h_min = std::min(out.h_min, h);
        out.h_max = std::max(out.h_max, h);
        rhs[i] = samples[i].gamma * std::pow(h, -out.leading_exponent);
        for (int c = 0; c < n_corrections; ++c)
            cols[1 + c][i] = std::pow(h, ex[c].value());
    }
    LsqFit fit = least_squares(cols, rhs);
    if (fit.condition > 1e10)
        throw ConditioningError("fit design matrix ill conditioned; widen the h-range",
                                fit.condition);
    out.amplitude = fit.coef[0];
    for (int c = 0; c < n_corrections; ++c) {
        out.corrections.push_back(fit.coef[1 + c]);
        out.correction_exponents.push_back(ex[c].value());
    }
    out.residual_norm = fit.residual_norm;
    out.condition = fit.condition;
    return out;
}

// Free-exponent mode: slope of log gamma against log h.
inline FitResult fit_free_slope(const std::vector<TraceSample>& samples) {
    if (samples.size() < 2) throw PreconditionError("need at least two samples");
    std::vector<double> lx, ly;
    for (const auto& s : samples) {
        if (s.gamma <= 0.0) continue;
        lx.push_back(std::log(s.h));
        ly.push_back(std::log(s.gamma));
    }
    if (lx.size() < 2) throw PreconditionError("free-slope fit needs positive gamma values");
    auto [slope, intercept] = fit_line(lx, ly);
    FitResult out;
    out.free_exponent = true;
    out.leading_exponent = slope;
    out.amplitude = std::exp(intercept);
    out.h_min = std::exp(*std::min_element(lx.begin(), lx.end()));
    out.h_max = std::exp(*std::max_element(lx.begin(), lx.end()));
    return out;
}

}  // namespace semitrace
