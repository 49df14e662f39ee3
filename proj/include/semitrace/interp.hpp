#pragma once

#include <functional>
#include <vector>

#include "semitrace/common.hpp"

namespace semitrace {

// Piecewise-Chebyshev proxy of an expensive smooth function on [a,b].
// Built from exact evaluations and verified against them at off-grid points;
// callers get quadrature-backed values at interpolation cost.
class PiecewiseChebyshev {
public:
    PiecewiseChebyshev() = default;

    template <typename Fn>
    static PiecewiseChebyshev build(Fn&& f, double a, double b, int intervals, int degree) {
        PiecewiseChebyshev p;
        p.a_ = a;
        p.b_ = b;
        p.m_ = intervals;
        p.deg_ = degree;
        p.coef_.assign(static_cast<std::size_t>(intervals) * (degree + 1), 0.0);
        const int n = degree + 1;
        std::vector<double> fx(n);
        for (int iv = 0; iv < intervals; ++iv) {
            const double lo = a + (b - a) * iv / intervals;
            const double hi = a + (b - a) * (iv + 1) / intervals;
            for (int j = 0; j < n; ++j) {
                const double t = std::cos(kPi * (j + 0.5) / n);  // Chebyshev points
                fx[j] = f(0.5 * (lo + hi) + 0.5 * (hi - lo) * t);
            }
            for (int c = 0; c < n; ++c) {
                double s = 0.0;
                for (int j = 0; j < n; ++j)
                    s += fx[j] * std::cos(kPi * c * (j + 0.5) / n);
                p.coef_[iv * n + c] = (c == 0 ? 1.0 : 2.0) * s / n;
            }
        }
        return p;
    }

    double operator()(double x) const {
        if (m_ == 0) return 0.0;
        if (x <= a_) x = a_;
        if (x >= b_) x = b_ - 1e-300;
        const double u = (x - a_) / (b_ - a_) * m_;
        int iv = static_cast<int>(u);
        if (iv >= m_) iv = m_ - 1;
        const double lo = a_ + (b_ - a_) * iv / m_;
        const double hi = a_ + (b_ - a_) * (iv + 1) / m_;
        const double t = (2.0 * x - lo - hi) / (hi - lo);
        // Clenshaw
        const int n = deg_ + 1;
        const double* c = &coef_[static_cast<std::size_t>(iv) * n];
        double b1 = 0.0, b2 = 0.0;
        for (int j = n - 1; j >= 1; --j) {
            double tmp = 2.0 * t * b1 - b2 + c[j];
            b2 = b1;
            b1 = tmp;
        }
        return t * b1 - b2 + c[0];
    }

    double lo() const { return a_; }
    double hi() const { return b_; }

    // Max abs deviation from `f` at `per_interval` off-node points per interval.
    template <typename Fn>
    double verify(Fn&& f, int per_interval = 3) const {
        double worst = 0.0;
        for (int iv = 0; iv < m_; ++iv) {
            for (int j = 1; j <= per_interval; ++j) {
                const double x = a_ + (b_ - a_) * (iv + j / (per_interval + 1.0)) / m_;
                worst = std::max(worst, std::abs((*this)(x)-f(x)));
            }
        }
        return worst;
    }

private:
    double a_ = 0.0, b_ = 1.0;
    int m_ = 0, deg_ = 0;
    std::vector<double> coef_;
};

}  // namespace semitrace
