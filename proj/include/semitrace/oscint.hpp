#pragma once

#include <complex>
#include <functional>
#include <map>
#include <optional>

#include "semitrace/interp.hpp"
#include "semitrace/lsq.hpp"
#include "semitrace/testfn.hpp"

namespace semitrace {

// ---------------------------------------------------------------------------
// Model oscillatory integral
//
//   I(lambda) = int e^{-i lambda y0 (y1^2 +- y2^k)} a(y0, y1, y2) dy0 dy1 dy2
//
// over y0 in R and (y1, y2) in R_+^2 (or R^2 behind a flag).  Integrating y0
// first turns it into the non-oscillatory form
//
//   I(lambda) = int a1_hat(lambda (y1^2 +- y2^k)) a2(y1) a3(y2) dy1 dy2
//
// (separable case; a1_hat is the partial Fourier transform with the testfn
// convention).  The definite phase admits the expansion
//
//   I(lambda) ~ sum_{j,l} lambda^{-(j+1)/2 - (l+1)/k} C_{j,l},
//   C_{j,l} = a2^{(j)}(0)/j! * a3^{(l)}(0)/l! * int a1_hat(y1^2+y2^k) y1^j y2^l,
//
// with the 1/(j! l!) factors of the Taylor construction.  The difference
// phase y1^2 - y2^k has no such expansion: a1_hat(lambda(y1^2-y2^k)) sits at
// a1_hat(0) along the whole ridge y1 = y2^{k/2}, and the scaled moment
// integrals beyond the leading one diverge there.
// ---------------------------------------------------------------------------

enum class PhaseMode { definite, indefinite };
enum class PairDomain { halfline, realline };

struct GeneralAmplitude {
    std::function<double(double, double, double)> f;  // (y0, y1, y2)
    double y0_lo = -1.0, y0_hi = 1.0;
    double y1_hi = 1.0, y2_hi = 1.0;  // support bounds in [0, hi]
};

struct ModelIntegral {
    int k = 4;
    PhaseMode mode = PhaseMode::definite;
    PairDomain domain = PairDomain::halfline;
    CompactBump a1;  // y0 factor
    CompactBump a2;  // y1 factor
    CompactBump a3;  // y2 factor
    std::complex<double> scale{1.0, 0.0};
    std::optional<GeneralAmplitude> general;  // overrides the separable triple

    static ModelIntegral bump_triple(int k, double w1 = 1.0, double w2 = 1.0, double w3 = 1.0) {
        ModelIntegral p;
        p.k = k;
        p.a1 = CompactBump{0.0, w1, 1.0, {}};
        p.a2 = CompactBump{0.0, w2, 1.0, {}};
        p.a3 = CompactBump{0.0, w3, 1.0, {}};
        return p;
    }
};

struct ResidualRow {
    double lambda = 0.0;
    std::complex<double> direct;
    std::complex<double> partial_sum;
    double residual = 0.0;
    bool saturated = false;
};

struct ResidualOrder {
    double slope = std::numeric_limits<double>::quiet_NaN();
    bool saturated = false;   // residuals at the numerical floor; slope omitted
    bool of_direct = false;   // indefinite mode: slope of |direct| itself
    std::vector<ResidualRow> rows;
};

namespace detail {

template <typename Fn>
std::complex<double> iterated_adaptive_2d(Fn&& f, double ax, double bx, double ay, double by,
                                          double abs_tol) {
    // outer in y (second variable), inner in x
    const double inner_tol = abs_tol / std::max(1e-12, (by - ay)) * 0.25;
    auto outer_re = integrate_adaptive(
        [&](double y) {
            return integrate_adaptive([&](double x) { return f(x, y).real(); }, ax, bx,
                                      inner_tol, 0.0, 2000)
                .value;
        },
        ay, by, abs_tol, 0.0, 2000);
    auto outer_im = integrate_adaptive(
        [&](double y) {
            return integrate_adaptive([&](double x) { return f(x, y).imag(); }, ax, bx,
                                      inner_tol, 0.0, 2000)
                .value;
        },
        ay, by, abs_tol, 0.0, 2000);
    return {outer_re.value, outer_im.value};
}

}  // namespace detail

class OscEngine {
public:
    explicit OscEngine(ModelIntegral p) : p_(std::move(p)) {
        if (p_.k < 4 || p_.k % 2 != 0) throw StructuralError("k must be even and >= 4");
        build_hat_proxy();
    }

    const ModelIntegral& problem() const { return p_; }
    double hat_tail() const { return omega_tail_; }

    std::complex<double> a1_hat(double omega) const {
        if (std::abs(omega) >= omega_tail_) return {0.0, 0.0};
        const double u = std::sqrt(std::abs(omega));
        std::complex<double> v{hat_re_(u), hat_im_(u)};
        if (omega < 0.0) v = std::conj(v);  // a1 is real
        return v;
    }

    // Exact value via the y0-integrated representation (2-d adaptive
    // quadrature of a non-oscillatory integrand).
    std::complex<double> direct_value(double lambda, double rel_tol = 1e-10) const {
        if (lambda <= 0.0) throw PreconditionError("lambda must be positive");
        if (p_.general) return direct_value_general(lambda, rel_tol);
        auto q = [&](double y1, double y2) {
            const double pk = std::pow(y2, p_.k);
            return p_.mode == PhaseMode::definite ? y1 * y1 + pk : y1 * y1 - pk;
        };
        auto f = [&](double y1, double y2) {
            return a1_hat(lambda * q(y1, y2)) * (p_.a2.value(y1) * p_.a3.value(y2));
        };
        const auto [x_lo, x_hi] = pair_range(p_.a2);
        const auto [y_lo, y_hi] = pair_range(p_.a3);
        if (x_lo >= x_hi || y_lo >= y_hi) return {0.0, 0.0};
        // coarse magnitude estimate for the absolute tolerance
        double scale_est = 0.0;
        {
            const GaussLegendre& g = gauss_legendre(48);
            for (int i = 0; i < 48; ++i)
                for (int j = 0; j < 48; ++j) {
                    const double x = 0.5 * (x_lo + x_hi) + 0.5 * (x_hi - x_lo) * g.x[i];
                    const double y = 0.5 * (y_lo + y_hi) + 0.5 * (y_hi - y_lo) * g.x[j];
                    scale_est += std::abs(f(x, y)) * g.w[i] * g.w[j];
                }
            scale_est *= 0.25 * (x_hi - x_lo) * (y_hi - y_lo);
        }
        const double abs_tol = std::max(rel_tol * scale_est, 1e-18);
        std::complex<double> v =
            detail::iterated_adaptive_2d(f, x_lo, x_hi, y_lo, y_hi, abs_tol);
        return p_.scale * v;
    }

    // C_{j,l} with the factorial normalization of the Taylor construction.
    std::complex<double> expansion_coefficient(int j, int l) {
        if (p_.mode == PhaseMode::indefinite)
            throw PreconditionError(
                "no asymptotic coefficients for the difference phase: the scaled moment "
                "integrals diverge along y1 = y2^{k/2}");
        const auto key = std::make_pair(j, l);
        auto it = coef_cache_.find(key);
        if (it != coef_cache_.end()) return it->second;
        std::complex<double> c;
        if (p_.general) {
            c = coefficient_general(j, l);
        } else {
            double fj = 1.0, fl = 1.0;
            for (int i = 2; i <= j; ++i) fj *= i;
            for (int i = 2; i <= l; ++i) fl *= i;
            // the moment integral is computed on R_+^2; over R^2 it folds by parity
            double fold = 1.0;
            if (p_.domain == PairDomain::realline)
                fold = (j % 2 == 0 ? 2.0 : 0.0) * (l % 2 == 0 ? 2.0 : 0.0);
            c = fold == 0.0 ? std::complex<double>{0.0, 0.0}
                            : p_.scale * fold * (p_.a2.derivative_at(0.0, j) / fj) *
                                  (p_.a3.derivative_at(0.0, l) / fl) * moment(j, l);
        }
        coef_cache_[key] = c;
        return c;
    }

    std::complex<double> expansion_value(double lambda, int J, int L) {
        std::complex<double> sum{0.0, 0.0};
        for (int j = 0; j <= J; ++j)
            for (int l = 0; l <= L; ++l)
                sum += std::pow(lambda, -0.5 * (j + 1) - static_cast<double>(l + 1) / p_.k) *
                       expansion_coefficient(j, l);
        return sum;
    }

    static double next_lattice_exponent(int k, int J, int L) {
        const double a = 0.5 * (J + 2) + 1.0 / k;
        const double b = 0.5 + static_cast<double>(L + 2) / k;
        return std::min(a, b);
    }

    // Log-log slope of |direct - partial sum| (definite) or of |direct|
    // (indefinite, exhibiting the failure of the expansion).
    ResidualOrder residual_order(int J, int L, const std::vector<double>& lambda_grid) {
        if (lambda_grid.size() < 6)
            throw PreconditionError("residual fit needs at least 6 lambda points");
        ResidualOrder out;
        out.of_direct = p_.mode == PhaseMode::indefinite;
        std::vector<double> lx, ly;
        int saturated = 0;
        for (double lam : lambda_grid) {
            ResidualRow row;
            row.lambda = lam;
            row.direct = direct_value(lam);
            if (!out.of_direct) {
                row.partial_sum = expansion_value(lam, J, L);
                row.residual = std::abs(row.direct - row.partial_sum);
                if (row.residual < 1e-13 * std::abs(row.direct)) {
                    row.saturated = true;
                    ++saturated;
                }
            } else {
                row.residual = std::abs(row.direct);
            }
            if (!row.saturated && row.residual > 0.0) {
                lx.push_back(std::log(lam));
                ly.push_back(std::log(row.residual));
            }
            out.rows.push_back(row);
        }
        if (saturated > static_cast<int>(lambda_grid.size()) / 2 || lx.size() < 3) {
            out.saturated = true;
            return out;
        }
        out.slope = fit_line(lx, ly).first;
        return out;
    }

private:
    ModelIntegral p_;
    double omega_tail_ = 0.0;
    double hat_sup_ = 0.0;
    PiecewiseChebyshev hat_re_, hat_im_;
    std::map<std::pair<int, int>, std::complex<double>> coef_cache_;

    std::pair<double, double> pair_range(const CompactBump& b) const {
        double lo = b.support_lo(), hi = b.support_hi();
        if (p_.domain == PairDomain::halfline) lo = std::max(lo, 0.0);
        return {lo, hi};
    }

    void build_hat_proxy() {
        // For general amplitudes the tail is scanned at slot (0,0); the
        // coefficient integrals cut on it with ample margin.
        auto transform_at = [&](double om) -> std::complex<double> {
            if (p_.general)
                return fourier_forward_compact(
                    [&](double t) { return p_.general->f(t, 0.0, 0.0); }, p_.general->y0_lo,
                    p_.general->y0_hi, om);
            return p_.a1.transform(om);
        };
        // Scan |a1_hat| on a geometric grid for the working tail.  The panel
        // quadrature carries a roundoff floor near 1e-15 * sup, so the
        // threshold sits a little above it.
        double mx = std::abs(transform_at(0.0));
        hat_sup_ = mx;
        double om = 1.0;
        double tail = 0.0;
        int run = 0;
        while (om < 1e6) {
            const double v = std::abs(transform_at(om));
            mx = std::max(mx, v);
            hat_sup_ = mx;
            if (v <= 3e-14 * mx) {
                if (++run > 12) { tail = om; break; }
            } else {
                run = 0;
            }
            om *= 1.25;
        }
        if (tail == 0.0) throw AccuracyError("partial transform decays too slowly");
        omega_tail_ = tail;
        if (p_.general) return;  // the general path evaluates its own transform
        const double u_max = std::sqrt(tail);
        const int intervals =
            4 + static_cast<int>(u_max * std::max(1.0, p_.a1.halfwidth + std::abs(p_.a1.center)));
        auto fre = [&](double u) { return p_.a1.transform(u * u).real(); };
        auto fim = [&](double u) { return p_.a1.transform(u * u).imag(); };
        hat_re_ = PiecewiseChebyshev::build(fre, 0.0, u_max, intervals, 20);
        hat_im_ = PiecewiseChebyshev::build(fim, 0.0, u_max, intervals, 20);
        const double dev = std::max(hat_re_.verify(fre, 3), hat_im_.verify(fim, 3));
        if (dev > 1e-11 * std::max(1.0, hat_sup_))
            throw AccuracyError("transform proxy verification failed: deviation " + fmt_g(dev, 4));
    }

    // int over R_+^2 of a1_hat(y1^2 + y2^k) y1^j y2^l
    std::complex<double> moment(int j, int l) const {
        const double y1_max = std::sqrt(omega_tail_);
        const double y2_max = std::pow(omega_tail_, 1.0 / p_.k);
        auto f = [&](double y1, double y2) {
            const double w = y1 * y1 + std::pow(y2, p_.k);
            std::complex<double> v = a1_hat(w);
            double mono = 1.0;
            for (int i = 0; i < j; ++i) mono *= y1;
            for (int i = 0; i < l; ++i) mono *= y2;
            return v * mono;
        };
        const double scale_guess = hat_sup_ * std::pow(y1_max, j + 1) * std::pow(y2_max, l + 1);
        return detail::iterated_adaptive_2d(f, 0.0, y1_max, 0.0, y2_max,
                                            std::max(1e-12 * scale_guess, 1e-16));
    }

    std::complex<double> direct_value_general(double lambda, double rel_tol) const {
        const GeneralAmplitude& ga = *p_.general;
        auto hat = [&](double omega, double y1, double y2) {
            return fourier_forward_compact([&](double t) { return ga.f(t, y1, y2); }, ga.y0_lo,
                                           ga.y0_hi, omega);
        };
        auto q = [&](double y1, double y2) {
            const double pk = std::pow(y2, p_.k);
            return p_.mode == PhaseMode::definite ? y1 * y1 + pk : y1 * y1 - pk;
        };
        auto f = [&](double y1, double y2) { return hat(lambda * q(y1, y2), y1, y2); };
        (void)rel_tol;
        return p_.scale *
               detail::iterated_adaptive_2d(f, 0.0, ga.y1_hi, 0.0, ga.y2_hi, 1e-12);
    }

    // Central differences with one Richardson pass for the slot derivatives
    // of the partial transform of a general amplitude.
    std::complex<double> coefficient_general(int j, int l) {
        const GeneralAmplitude& ga = *p_.general;
        const double step = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 3.0) *
                            std::max(1.0, std::max(ga.y1_hi, ga.y2_hi)) * 50.0;
        auto hat = [&](double omega, double y1, double y2) {
            return fourier_forward_compact([&](double t) { return ga.f(t, y1, y2); }, ga.y0_lo,
                                           ga.y0_hi, omega);
        };
        auto deriv = [&](double omega, double d) {
            // d^j/dy1^j d^l/dy2^l at (0,0) by nested central differences on a
            // symmetric grid of size (j+1) x (l+1) steps
            std::complex<double> acc{0.0, 0.0};
            for (int a = 0; a <= j; ++a)
                for (int b = 0; b <= l; ++b) {
                    const double w = ((a + b) % 2 == 0 ? 1.0 : -1.0) * detail_binom(j, a) *
                                     detail_binom(l, b);
                    acc += w * hat(omega, (0.5 * j - a) * d, (0.5 * l - b) * d);
                }
            return acc / std::pow(d, j + l);
        };
        const double y1_max = std::sqrt(omega_tail_);
        const double y2_max = std::pow(omega_tail_, 1.0 / p_.k);
        auto f = [&](double y1, double y2) {
            const double w = y1 * y1 + std::pow(y2, p_.k);
            if (w >= omega_tail_) return std::complex<double>{0.0, 0.0};
            const std::complex<double> d1 = deriv(w, step);
            const std::complex<double> d2 = deriv(w, step / 2.0);
            std::complex<double> v = (4.0 * d2 - d1) / 3.0;
            double mono = 1.0;
            for (int i = 0; i < j; ++i) mono *= y1;
            for (int i = 0; i < l; ++i) mono *= y2;
            return v * mono;
        };
        double fj = 1.0, fl = 1.0;
        for (int i = 2; i <= j; ++i) fj *= i;
        for (int i = 2; i <= l; ++i) fl *= i;
        return p_.scale / (fj * fl) *
               detail::iterated_adaptive_2d(f, 0.0, y1_max, 0.0, y2_max, 1e-10);
    }

    static double detail_binom(int n, int k) {
        double r = 1.0;
        for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
        return r;
    }
};

}  // namespace semitrace
