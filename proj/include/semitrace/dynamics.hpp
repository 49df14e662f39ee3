#pragma once

#include <array>
#include <functional>

#include "semitrace/lsq.hpp"
#include "semitrace/model.hpp"
#include "semitrace/quadrature.hpp"
#include "semitrace/volume.hpp"

namespace semitrace {

// Hamiltonian flow of p = xi^2 + V:  xdot = 2 xi,  xidot = -grad V(x).

struct PhasePoint {
    Vec3 x{0.0, 0.0, 0.0};
    Vec3 xi{0.0, 0.0, 0.0};
};

inline PhasePoint phase_point_1d(double x, double xi) {
    PhasePoint z;
    z.x[0] = x;
    z.xi[0] = xi;
    return z;
}

using Mat6 = std::array<std::array<double, 6>, 6>;

inline double symbol_value(const PotentialModel& m, const PhasePoint& z) {
    return dot(z.xi, z.xi, m.dims) + m.eval(z.x);
}

namespace detail {

struct FlowState {
    std::array<double, 6> y{};  // x then xi
};

inline std::array<double, 6> flow_rhs(const PotentialModel& m,
                                      const std::vector<Polynomial>& gradV,
                                      const std::array<double, 6>& y) {
    const int n = m.dims;
    std::array<double, 6> f{};
    Vec3 x{y[0], y[1], y[2]};
    Vec3 xd = m.displaced(x);
    for (int i = 0; i < n; ++i) f[i] = 2.0 * y[3 + i];
    for (int i = 0; i < n; ++i) f[3 + i] = -gradV[i].eval(xd);
    return f;
}

}  // namespace detail

// Adaptive Dormand-Prince 5(4).  The flow is polynomial and non-stiff on the
// compacta we use; the embedded error estimate controls the step and the
// energy drift is asserted afterwards.
class FlowIntegrator {
public:
    explicit FlowIntegrator(const PotentialModel& m) : model_(m), grad_(m.germ.gradient()) {}

    // Integrate from z over [0, t] (t may be negative).
    PhasePoint integrate(const PhasePoint& z, double t, double tol = 1e-12,
                         bool check_energy = true) const {
        std::array<double, 6> y{};
        const int n = model_.dims;
        for (int i = 0; i < n; ++i) { y[i] = z.x[i]; y[3 + i] = z.xi[i]; }
        advance(y, t, tol);
        PhasePoint out;
        for (int i = 0; i < n; ++i) { out.x[i] = y[i]; out.xi[i] = y[3 + i]; }
        if (check_energy) {
            const double e0 = symbol_value(model_, z), e1 = symbol_value(model_, out);
            if (std::abs(e1 - e0) > 200.0 * tol * (1.0 + std::abs(e0)))
                throw AccuracyError("energy drift " + fmt_g(e1 - e0, 4) + " exceeds tolerance");
        }
        return out;
    }

    // First return time of the section xi = 0 after leaving a turning point,
    // i.e. the minimal period of the 1-d orbit through (x_turn, 0).
    double first_return_time(double x_turn, double tol, double t_cap) const {
        if (model_.dims != 1) throw PreconditionError("period detection is 1-d");
        std::array<double, 6> y{};
        y[0] = x_turn;
        double t = 0.0;
        int crossings = 0;
        double dt = 1e-3;
        std::array<double, 6> yprev = y;
        double tprev = 0.0;
        while (t < t_cap) {
            yprev = y;
            tprev = t;
            step_adaptive(y, t, dt, tol);
            if (t > 1e-12 && yprev[3] != 0.0 && y[3] * yprev[3] <= 0.0 && std::abs(yprev[3]) > 0.0) {
                // bisect the crossing inside [tprev, t]
                double lo = tprev, hi = t;
                std::array<double, 6> ylo = yprev;
                for (int it = 0; it < 80; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    std::array<double, 6> ym = ylo;
                    advance_fixed(ym, mid - lo, tol);
                    if (ym[3] * ylo[3] > 0.0) { lo = mid; ylo = ym; }
                    else hi = mid;
                    if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
                }
                ++crossings;
                if (crossings == 2) return 0.5 * (lo + hi);
                // restart exactly from the refined crossing
                advance_fixed(ylo, 0.5 * (lo + hi) - lo, tol);
                y = ylo;
                t = 0.5 * (lo + hi);
                // nudge past the section
                step_adaptive(y, t, dt, tol);
            }
        }
        throw StiffnessError("no return to the section within the time cap " + fmt_g(t_cap, 4));
    }

    const PotentialModel& model() const { return model_; }

private:
    PotentialModel model_;
    std::vector<Polynomial> grad_;

    void advance(std::array<double, 6>& y, double t_final, double tol) const {
        double t = 0.0;
        const double dir = t_final >= 0.0 ? 1.0 : -1.0;
        double dt = dir * std::min(0.1, std::abs(t_final));
        if (t_final == 0.0) return;
        while (dir * (t_final - t) > 1e-300) {
            if (dir * (t + dt) > dir * t_final) dt = t_final - t;
            double taken = dt;
            step_adaptive(y, t, dt, tol);
            (void)taken;
            if (std::abs(dt) < 1e-15 * std::max(1.0, std::abs(t_final)))
                throw StiffnessError("step-size collapse in flow integration");
        }
    }

    // advance by exactly dt (sub-stepping adaptively)
    void advance_fixed(std::array<double, 6>& y, double dt, double tol) const {
        double t = 0.0;
        double step = dt;
        while (std::abs(dt - t) > 1e-300) {
            if (std::abs(t + step) > std::abs(dt)) step = dt - t;
            step_adaptive(y, t, step, tol);
            if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(dt)))
                throw StiffnessError("step-size collapse in flow integration");
        }
    }

    // One adaptive DP54 step: advances y and t, updates the step proposal dt.
    void step_adaptive(std::array<double, 6>& y, double& t, double& dt, double tol) const {
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                                a53 = 64448.0 / 6561, a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                                a64 = 49.0 / 176, a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                                b5 = -2187.0 / 6784, b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
        (void)c2; (void)c3; (void)c4; (void)c5;
        for (int attempt = 0; attempt < 200; ++attempt) {
            auto f = [&](const std::array<double, 6>& v) {
                return detail::flow_rhs(model_, grad_, v);
            };
            auto ax = [&](const std::array<double, 6>& base, std::initializer_list<std::pair<double, const std::array<double, 6>*>> terms) {
                std::array<double, 6> r = base;
                for (const auto& [c, k] : terms)
                    for (int i = 0; i < 6; ++i) r[i] += dt * c * (*k)[i];
                return r;
            };
            const std::array<double, 6> k1 = f(y);
            const std::array<double, 6> k2 = f(ax(y, {{a21, &k1}}));
            const std::array<double, 6> k3 = f(ax(y, {{a31, &k1}, {a32, &k2}}));
            const std::array<double, 6> k4 = f(ax(y, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
            const std::array<double, 6> k5 =
                f(ax(y, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
            const std::array<double, 6> k6 =
                f(ax(y, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
            std::array<double, 6> y5 = y;
            for (int i = 0; i < 6; ++i)
                y5[i] += dt * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
            const std::array<double, 6> k7 = f(y5);
            double err = 0.0, scale = 0.0;
            for (int i = 0; i < 6; ++i) {
                const double e = dt * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                       e6 * k6[i] + e7 * k7[i]);
                err += e * e;
                const double s = std::max(std::abs(y[i]), std::abs(y5[i])) + 1e-3;
                scale = std::max(scale, s);
            }
            err = std::sqrt(err) / (tol * (1.0 + scale));
            if (err <= 1.0 || std::abs(dt) < 1e-14) {
                t += dt;
                y = y5;
                const double grow = err > 1e-10 ? 0.9 * std::pow(err, -0.2) : 5.0;
                dt *= std::min(5.0, std::max(0.2, grow));
                return;
            }
            dt *= std::max(0.1, 0.9 * std::pow(err, -0.25));
        }
        throw StiffnessError("step control failed to converge");
    }
};

inline PhasePoint integrate_flow(const PotentialModel& m, const PhasePoint& z, double t,
                                 double tol = 1e-12) {
    return FlowIntegrator(m).integrate(z, t, tol);
}

// ---------------------------------------------------------------------------
// Linearization at the equilibrium z0 = (x0, 0)
// ---------------------------------------------------------------------------

struct FlowJet {
    double t = 0.0;
    int dims = 1;
    Mat6 jacobian{};   // 2n x 2n, stored in the leading block
    int kernel_dim = 0;  // dim Ker(dPhi_t - Id)
    double fd_error = 0.0;
};

namespace detail {

inline int matrix_rank(const Mat6& A, int n, double tol_rel) {
    // Gaussian elimination with full pivoting on a copy.
    Mat6 M = A;
    double mx = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mx = std::max(mx, std::abs(M[i][j]));
    if (mx == 0.0) return 0;
    const double tol = tol_rel * mx;
    std::vector<bool> used_row(n, false), used_col(n, false);
    int rank = 0;
    for (int step = 0; step < n; ++step) {
        int pr = -1, pc = -1;
        double best = tol;
        for (int i = 0; i < n; ++i) {
            if (used_row[i]) continue;
            for (int j = 0; j < n; ++j) {
                if (used_col[j]) continue;
                if (std::abs(M[i][j]) > best) { best = std::abs(M[i][j]); pr = i; pc = j; }
            }
        }
        if (pr < 0) break;
        ++rank;
        used_row[pr] = true;
        used_col[pc] = true;
        for (int i = 0; i < n; ++i) {
            if (used_row[i]) continue;
            const double f = M[i][pc] / M[pr][pc];
            for (int j = 0; j < n; ++j) M[i][j] -= f * M[pr][j];
        }
    }
    return rank;
}

}  // namespace detail

// Central-difference Jacobian of z -> Phi_t(z) at z0 with one Richardson pass;
// the scale error triggers when halving the scale moves the answer too much.
inline FlowJet linearization_at_equilibrium(const PotentialModel& m, double t,
                                            double fd_scale = 4e-4, double ode_tol = 1e-13) {
    FlowIntegrator fi(m);
    const int n = m.dims;
    FlowJet jet;
    jet.t = t;
    jet.dims = n;
    PhasePoint z0;
    for (int i = 0; i < n; ++i) z0.x[i] = m.x0[i];

    auto jac_at = [&](double d) {
        Mat6 J{};
        for (int col = 0; col < 2 * n; ++col) {
            PhasePoint zp = z0, zm = z0;
            (col < n ? zp.x[col] : zp.xi[col - n]) += d;
            (col < n ? zm.x[col] : zm.xi[col - n]) -= d;
            PhasePoint fp = fi.integrate(zp, t, ode_tol, false);
            PhasePoint fm = fi.integrate(zm, t, ode_tol, false);
            for (int row = 0; row < 2 * n; ++row) {
                const double vp = row < n ? fp.x[row] : fp.xi[row - n];
                const double vm = row < n ? fm.x[row] : fm.xi[row - n];
                J[row][col] = (vp - vm) / (2.0 * d);
            }
        }
        return J;
    };
    const Mat6 J1 = jac_at(fd_scale);
    const Mat6 J2 = jac_at(fd_scale / 2.0);
    double delta = 0.0;
    for (int i = 0; i < 2 * n; ++i)
        for (int j = 0; j < 2 * n; ++j) {
            jet.jacobian[i][j] = (4.0 * J2[i][j] - J1[i][j]) / 3.0;  // kill the O(d^2) term
            delta = std::max(delta, std::abs(J2[i][j] - J1[i][j]));
        }
    jet.fd_error = delta / 3.0 + 1e3 * ode_tol / fd_scale;
    if (delta > 0.05)
        throw AccuracyError("finite-difference scale too large for the linearization (delta " +
                            fmt_g(delta, 4) + ")");
    Mat6 K = jet.jacobian;
    for (int i = 0; i < 2 * n; ++i) K[i][i] -= 1.0;
    jet.kernel_dim = 2 * n - detail::matrix_rank(K, 2 * n, 1e-6);
    return jet;
}

// ---------------------------------------------------------------------------
// The (k-1)-st derivative of the flow at the equilibrium, two ways.
// ---------------------------------------------------------------------------

// Closed form: with M_t = [[1, 2t],[0, 1]] (per coordinate pair),
//   d^{k-1} Phi_t(z0)(w^{k-1}) = M_t * integral_0^t (2s g(s), -g(s)) ds,
//   g(s) = (k-1)! grad V_k (w_x + 2 s w_xi),
// evaluated exactly by Gauss-Legendre (polynomial integrand in s).
inline std::array<double, 6> derivative_flow_formula(const PotentialModel& m, double t,
                                                     const PhasePoint& dir) {
    const int n = m.dims;
    const int k = m.germ_degree();
    const HomogeneousForm vk = m.leading_form();
    std::vector<Polynomial> grad = vk.poly.gradient();
    double kfact = 1.0;
    for (int i = 2; i <= k - 1; ++i) kfact *= i;

    const int nodes = k / 2 + 2;
    const GaussLegendre& g = gauss_legendre(nodes);
    std::array<double, 6> top{};  // integral of 2 s g(s)
    std::array<double, 6> bot{};  // integral of g(s)
    for (int q = 0; q < nodes; ++q) {
        const double s = 0.5 * t * (1.0 + g.x[q]);
        const double w = 0.5 * t * g.w[q];
        Vec3 arg = axpy(2.0 * s, dir.xi, dir.x, n);
        for (int i = 0; i < n; ++i) {
            const double gi = kfact * grad[i].eval(arg);
            top[i] += w * 2.0 * s * gi;
            bot[i] += w * gi;
        }
    }
    std::array<double, 6> out{};
    for (int i = 0; i < n; ++i) {
        out[i] = top[i] + 2.0 * t * (-bot[i]);
        out[3 + i] = -bot[i];
    }
    return out;
}

struct FdDerivative {
    std::array<double, 6> value{};
    double est_error = 0.0;
    bool usable = true;
};

namespace detail {

inline double binom(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
}

}  // namespace detail

// order-th directional derivative of z -> Phi_t(z) at z0 along dir, by
// central differences of the integrated flow with Richardson control.
inline FdDerivative derivative_tensor_fd(const PotentialModel& m, double t, const PhasePoint& dir,
                                         int order, double base_step = 0.0,
                                         double ode_tol = 1e-13) {
    FlowIntegrator fi(m);
    const int n = m.dims;
    PhasePoint z0;
    for (int i = 0; i < n; ++i) z0.x[i] = m.x0[i];
    // balance the O(d^2) stencil truncation against roundoff ~ ode_tol / d^order
    if (base_step <= 0.0) base_step = order <= 3 ? 0.02 : 0.03;

    auto stencil = [&](double d) {
        // m-th central difference: sum (-1)^i C(m,i) f((m/2 - i) d) / d^m
        std::array<double, 6> acc{};
        for (int i = 0; i <= order; ++i) {
            const double node = (0.5 * order - i) * d;
            PhasePoint z = z0;
            for (int c = 0; c < n; ++c) {
                z.x[c] += node * dir.x[c];
                z.xi[c] += node * dir.xi[c];
            }
            PhasePoint f = fi.integrate(z, t, ode_tol, false);
            const double w = (i % 2 == 0 ? 1.0 : -1.0) * detail::binom(order, i);
            for (int c = 0; c < n; ++c) {
                acc[c] += w * f.x[c];
                acc[3 + c] += w * f.xi[c];
            }
        }
        const double dm = std::pow(d, order);
        for (auto& v : acc) v /= dm;
        return acc;
    };

    // Three scales with the observed convergence order: which stencil error
    // term leads depends on which flow derivatives vanish for the germ.
    const std::array<double, 6> d1 = stencil(base_step);
    const std::array<double, 6> d2 = stencil(base_step / 2.0);
    const std::array<double, 6> d3 = stencil(base_step / 4.0);
    double n12 = 0.0, n23 = 0.0;
    for (int i = 0; i < 6; ++i) {
        n12 = std::max(n12, std::abs(d1[i] - d2[i]));
        n23 = std::max(n23, std::abs(d2[i] - d3[i]));
    }
    double p = 2.0;
    if (n23 > 0.0 && n12 > 0.0) p = std::log2(n12 / n23);
    p = std::min(6.0, std::max(1.0, p));
    const double fac = std::pow(2.0, p) - 1.0;
    FdDerivative out;
    double mag = 0.0;
    for (int i = 0; i < 6; ++i) {
        out.value[i] = d3[i] + (d3[i] - d2[i]) / fac;
        mag = std::max(mag, std::abs(out.value[i]));
    }
    const double roundoff = 64.0 * ode_tol / std::pow(base_step / 4.0, order);
    out.est_error = n23 / fac + roundoff;
    out.usable = out.est_error < std::max(1.0, mag);
    return out;
}

// ---------------------------------------------------------------------------
// Generating-function structure
// ---------------------------------------------------------------------------

// S_trunc(t,x,xi) = <x,xi> - t|xi|^2 + S_k(t,x,xi), where
// S_k(z) = (1/k!) sigma(z, d^{k-1}Phi_t(0)((x - 2t xi, xi)^{k-1})), and
// sigma((x,xi),(a,b)) = <x,b> - <xi,a>.
struct GeneratingFunction {
    const PotentialModel* model;
    double t;

    double sk(const PhasePoint& z) const {
        const int n = model->dims;
        PhasePoint w;
        w.x = axpy(-2.0 * t, z.xi, z.x, n);
        w.xi = z.xi;
        std::array<double, 6> P = derivative_flow_formula(*model, t, w);
        double kfact = 1.0;
        const int k = model->germ_degree();
        for (int i = 2; i <= k; ++i) kfact *= i;
        double sig = 0.0;
        for (int i = 0; i < n; ++i) sig += z.x[i] * P[3 + i] - z.xi[i] * P[i];
        return sig / kfact;
    }

    double value(const PhasePoint& z) const {
        const int n = model->dims;
        double v = dot(z.x, z.xi, n) - t * dot(z.xi, z.xi, n);
        if (!model->free_particle()) v += sk(z);
        return v;
    }

    // Exact gradient: the quadratic part is differentiated by hand and S_k by
    // the chain rule through the closed-form derivative of the flow jet.
    void gradient(const PhasePoint& z, Vec3& dx, Vec3& dxi) const {
        const int n = model->dims;
        for (int i = 0; i < n; ++i) {
            dx[i] = z.xi[i];
            dxi[i] = z.x[i] - 2.0 * t * z.xi[i];
        }
        if (model->free_particle()) return;

        const int k = model->germ_degree();
        const HomogeneousForm vk = model->leading_form();
        std::vector<Polynomial> grad = vk.poly.gradient();
        std::vector<std::vector<Polynomial>> hess(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) hess[i].push_back(grad[i].derivative(j));
        double km1fact = 1.0;
        for (int i = 2; i <= k - 1; ++i) km1fact *= i;
        double kfact = km1fact * k;

        PhasePoint w;
        w.x = axpy(-2.0 * t, z.xi, z.x, n);
        w.xi = z.xi;
        const std::array<double, 6> P = derivative_flow_formula(*model, t, w);

        const int nodes = k / 2 + 2;
        const GaussLegendre& g = gauss_legendre(nodes);
        // dP(w) . u for u = L e_dir, assembled on the fly below
        auto dP = [&](const PhasePoint& u) {
            std::array<double, 6> top{}, bot{};
            for (int q = 0; q < nodes; ++q) {
                const double s = 0.5 * t * (1.0 + g.x[q]);
                const double wq = 0.5 * t * g.w[q];
                Vec3 arg = axpy(2.0 * s, w.xi, w.x, n);
                Vec3 uarg = axpy(2.0 * s, u.xi, u.x, n);
                for (int i = 0; i < n; ++i) {
                    double hi = 0.0;
                    for (int j = 0; j < n; ++j) hi += hess[i][j].eval(arg) * uarg[j];
                    hi *= km1fact;
                    top[i] += wq * 2.0 * s * hi;
                    bot[i] += wq * hi;
                }
            }
            std::array<double, 6> r{};
            for (int i = 0; i < n; ++i) {
                r[i] = top[i] - 2.0 * t * bot[i];
                r[3 + i] = -bot[i];
            }
            return r;
        };

        auto sigma = [&](const PhasePoint& a, const std::array<double, 6>& b) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += a.x[i] * b[3 + i] - a.xi[i] * b[i];
            return s;
        };

        for (int d = 0; d < 2 * n; ++d) {
            PhasePoint delta;
            if (d < n) delta.x[d] = 1.0;
            else delta.xi[d - n] = 1.0;
            // L delta: (dx - 2t dxi, dxi)
            PhasePoint ldelta;
            ldelta.x = axpy(-2.0 * t, delta.xi, delta.x, n);
            ldelta.xi = delta.xi;
            const double term = (sigma(delta, P) + sigma(z, dP(ldelta))) / kfact;
            if (d < n) dx[d] += term;
            else dxi[d - n] += term;
        }
    }
};

struct GeneratingDefectResult {
    double fitted_order = 0.0;
    bool defect_below_floor = false;           // free flow: defect is identically ~0
    std::vector<double> eps;
    std::vector<double> defect;                // max over the direction sample
    double corollary_x_identity_error = 0.0;   // xi^0 part vs -t V_k(x)
    double corollary_xi_identity_error = 0.0;  // xi^1 part vs t^2 <xi, grad V_k>
};

// Defect of the truncated generating function under the exact flow,
// fitted as a power of the phase-space radius eps.
inline GeneratingDefectResult generating_residual(const PotentialModel& m, double t,
                                                  const std::vector<double>& eps_list,
                                                  double ode_tol = 1e-13) {
    GeneratingFunction S{&m, t};
    FlowIntegrator fi(m);
    const int n = m.dims;

    // fixed unit direction sample
    std::vector<PhasePoint> dirs;
    for (int i = 0; i < n; ++i) {
        PhasePoint a;
        a.x[i] = 1.0;
        a.xi[i] = 0.5;
        dirs.push_back(a);
        PhasePoint b;
        b.x[i] = -0.6;
        b.xi[i] = 1.0;
        dirs.push_back(b);
    }
    {
        PhasePoint c;
        for (int i = 0; i < n; ++i) { c.x[i] = 0.7; c.xi[i] = -0.8; }
        dirs.push_back(c);
    }
    for (auto& d : dirs) {
        const double r = std::sqrt(dot(d.x, d.x, n) + dot(d.xi, d.xi, n));
        for (int i = 0; i < n; ++i) { d.x[i] /= r; d.xi[i] /= r; }
    }

    GeneratingDefectResult out;
    for (double e : eps_list) {
        double worst = 0.0;
        for (const auto& d : dirs) {
            PhasePoint z;
            z.x = axpy(e, d.x, Vec3{0, 0, 0}, n);
            z.xi = axpy(e, d.xi, Vec3{0, 0, 0}, n);
            Vec3 dx{}, dxi{};
            S.gradient(z, dx, dxi);
            PhasePoint start;
            start.x = dxi;  // d S / d xi
            start.xi = z.xi;
            PhasePoint flowed = fi.integrate(start, t, ode_tol, false);
            double defect2 = 0.0;
            for (int i = 0; i < n; ++i) {
                const double ex = flowed.x[i] - z.x[i];
                const double exi = flowed.xi[i] - dx[i];
                defect2 += ex * ex + exi * exi;
            }
            worst = std::max(worst, std::sqrt(defect2));
        }
        out.eps.push_back(e);
        out.defect.push_back(worst);
    }

    // Corollary identities at xi = 0 (skipped for the free flow).
    if (!m.free_particle()) {
        const HomogeneousForm vk = m.leading_form();
        std::vector<Polynomial> grad = vk.poly.gradient();
        double worst_x = 0.0, worst_xi = 0.0;
        for (double xv : {0.3, 0.7, 1.1}) {
            PhasePoint z;
            for (int i = 0; i < n; ++i) z.x[i] = xv / (1.0 + i);
            const double skv = S.sk(z);
            const double target = -t * vk.poly.eval(z.x);
            worst_x = std::max(worst_x, std::abs(skv - target) / std::max(1.0, std::abs(target)));
            Vec3 dx{}, dxi{};
            S.gradient(z, dx, dxi);
            for (int i = 0; i < n; ++i) {
                // xi-gradient of S_k at xi = 0 is t^2 grad V_k(x); strip the
                // quadratic part of S_trunc first
                const double sk_xi = dxi[i] - z.x[i];
                const double tgt = t * t * grad[i].eval(z.x);
                worst_xi = std::max(worst_xi, std::abs(sk_xi - tgt) / std::max(1.0, std::abs(tgt)));
            }
        }
        out.corollary_x_identity_error = worst_x;
        out.corollary_xi_identity_error = worst_xi;
    }

    // log-log fit of the defect
    double floor_hit = 0.0;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < out.eps.size(); ++i) {
        if (out.defect[i] < 1e-12) { floor_hit += 1.0; continue; }
        lx.push_back(std::log(out.eps[i]));
        ly.push_back(std::log(out.defect[i]));
    }
    if (lx.size() < 2) {
        out.defect_below_floor = true;
        out.fitted_order = std::numeric_limits<double>::infinity();
    } else {
        out.fitted_order = fit_line(lx, ly).first;
    }
    return out;
}

// Minimal period of the 1-d orbit at energy E (event detection on xi = 0).
inline double period(const PotentialModel& m, double E, double ode_tol = 1e-12,
                     double t_cap = 1e4) {
    if (m.dims != 1) throw PreconditionError("period is implemented for 1-d models");
    if (E <= m.eval(m.x0)) throw PreconditionError("energy below the well bottom");
    const double b = detail::outer_turning(m, E, +1.0);
    return FlowIntegrator(m).first_return_time(m.x0[0] + b, ode_tol, t_cap);
}

}  // namespace semitrace
