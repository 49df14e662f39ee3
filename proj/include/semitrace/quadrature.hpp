#pragma once

#include <complex>
#include <map>
#include <mutex>
#include <vector>

#include "semitrace/common.hpp"

namespace semitrace {

// ---------------------------------------------------------------------------
// Gauss-Legendre rules on [-1,1], computed by Newton iteration on P_n and
// cached per order.  Nodes are accurate to ~2 ulp which is plenty below.
// ---------------------------------------------------------------------------

struct GaussLegendre {
    std::vector<double> x;  // nodes in (-1,1), ascending
    std::vector<double> w;

    explicit GaussLegendre(int n) {
        if (n < 1) throw StructuralError("Gauss-Legendre order must be >= 1");
        x.resize(n);
        w.resize(n);
        const int m = (n + 1) / 2;
        for (int i = 0; i < m; ++i) {
            // Chebyshev-based initial guess, then Newton on P_n.
            double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < n; ++j) {
                    double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
                }
                pp = n * (z * p0 - p1) / (z * z - 1.0);
                double dz = p0 / pp;
                z -= dz;
                if (std::abs(dz) < 1e-15) break;
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            w[n - 1 - i] = w[i];
        }
    }
};

inline const GaussLegendre& gauss_legendre(int n) {
    static std::map<int, GaussLegendre> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, GaussLegendre(n)).first;
    return it->second;
}

template <typename Fn>
auto integrate_gl(Fn&& f, double a, double b, int order) {
    const GaussLegendre& g = gauss_legendre(order);
    const double mid = 0.5 * (a + b);
    const double hw = 0.5 * (b - a);
    using R = decltype(f(a));
    R sum{};
    for (int i = 0; i < order; ++i) sum += g.w[i] * f(mid + hw * g.x[i]);
    return sum * hw;
}

// Equispaced trapezoid on a full period; spectrally accurate for smooth
// periodic integrands, which is what every circle integral here is.
template <typename Fn>
double integrate_periodic(Fn&& f, double period, int n) {
    double sum = 0.0;
    const double dt = period / n;
    for (int i = 0; i < n; ++i) sum += f(i * dt);
    return sum * dt;
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod 7/15.  Independent of the fixed-order rules above,
// so it can serve as the cross-check oracle for them.
// ---------------------------------------------------------------------------

namespace gk_detail {
// G7/K15 nodes (positive half) and weights.
inline constexpr double kx[8] = {
    0.0,
    0.2077849550078985, 0.4058451513773972, 0.5860872354676911,
    0.7415311855993945, 0.8648644233597691, 0.9491079123427585,
    0.9914553711208126};
inline constexpr double kw[8] = {
    0.2094821410847278,
    0.2044329400752989, 0.1903505780647854, 0.1690047266392679,
    0.1406532597155259, 0.1047900103222502, 0.0630920926299785,
    0.0229353220105292};
// Gauss weights align with kx[0], kx[2], kx[4], kx[6] (even Kronrod indices).
inline constexpr double gw[4] = {
    0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
    0.1294849661688697};
}  // namespace gk_detail

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    long evals = 0;
};

template <typename Fn>
void gk15_panel(Fn&& f, double a, double b, double& k15, double& err) {
    using namespace gk_detail;
    const double mid = 0.5 * (a + b);
    const double hw = 0.5 * (b - a);
    const double f0 = f(mid);
    double kr = kw[0] * f0;
    double gs = gw[0] * f0;
    for (int i = 1; i < 8; ++i) {
        const double fp = f(mid + hw * kx[i]);
        const double fm = f(mid - hw * kx[i]);
        kr += kw[i] * (fp + fm);
        if (i % 2 == 0) gs += gw[i / 2] * (fp + fm);
    }
    k15 = kr * hw;
    const double diff = std::abs(kr - gs) * hw;
    err = diff * std::sqrt(std::max(diff, 1e-300));
    err = std::min(std::max(err, 1e-18 * std::abs(k15)), diff);
    if (err == 0.0) err = diff;
}

template <typename Fn>
QuadResult integrate_adaptive(Fn&& f, double a, double b, double abs_tol, double rel_tol,
                              int max_panels = 4000) {
    struct Panel { double a, b, val, err; };
    double v0, e0;
    gk15_panel(f, a, b, v0, e0);
    std::vector<Panel> heap{{a, b, v0, e0}};
    long evals = 15;
    double total = v0, toterr = e0;
    while (static_cast<int>(heap.size()) < max_panels) {
        if (toterr <= abs_tol || toterr <= rel_tol * std::abs(total)) break;
        // split the worst panel
        std::size_t worst = 0;
        for (std::size_t i = 1; i < heap.size(); ++i)
            if (heap[i].err > heap[worst].err) worst = i;
        Panel p = heap[worst];
        if (p.b - p.a < 1e-15 * (std::abs(p.a) + std::abs(p.b) + 1.0)) break;
        const double m = 0.5 * (p.a + p.b);
        Panel l{p.a, m, 0, 0}, r{m, p.b, 0, 0};
        gk15_panel(f, l.a, l.b, l.val, l.err);
        gk15_panel(f, r.a, r.b, r.val, r.err);
        evals += 30;
        total += l.val + r.val - p.val;
        toterr += l.err + r.err - p.err;
        heap[worst] = l;
        heap.push_back(r);
    }
    // recompute sums to avoid drift
    total = 0.0; toterr = 0.0;
    for (const auto& p : heap) { total += p.val; toterr += p.err; }
    return {total, toterr, evals};
}

// Complex-valued adaptive integral: run the real machinery on both parts.
template <typename Fn>
std::complex<double> integrate_adaptive_complex(Fn&& f, double a, double b, double abs_tol,
                                                double rel_tol, double* err_out = nullptr,
                                                int max_panels = 4000) {
    QuadResult re = integrate_adaptive([&](double t) { return f(t).real(); }, a, b,
                                       abs_tol, rel_tol, max_panels);
    QuadResult im = integrate_adaptive([&](double t) { return f(t).imag(); }, a, b,
                                       abs_tol, rel_tol, max_panels);
    if (err_out) *err_out = re.error + im.error;
    return {re.value, im.value};
}

}  // namespace semitrace
