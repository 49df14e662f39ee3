#pragma once

#include <cstring>
#include <limits>
#include <span>
#include <vector>

#include "semitrace/model.hpp"

namespace semitrace {

inline constexpr int kNoChannel = std::numeric_limits<int>::min();

// ---------------------------------------------------------------------------
// Sturm counts for symmetric tridiagonal matrices.
//
// The LDL^T recurrence d_i = (a_i - x) - b_{i-1}^2 / d_{i-1} yields
// #(d_i < 0) = #(eigenvalues < x).  The batch kernel runs many shifts through
// one sweep of the matrix; the inner loop is written to auto-vectorize.
// ---------------------------------------------------------------------------

inline double sturm_pivmin(const std::vector<double>& off2) {
    double mx = 1.0;
    for (double v : off2) mx = std::max(mx, v);
    return mx * 1e-280;
}

inline void sturm_counts(const std::vector<double>& diag, const std::vector<double>& off2,
                         const double* shifts, int m, int* counts, double pivmin) {
    const int n = static_cast<int>(diag.size());
    constexpr int B = 128;
    double d[B];
    double neg[B];
    for (int base = 0; base < m; base += B) {
        const int mb = std::min(B, m - base);
        const double* x = shifts + base;
        const double a0 = diag[0];
        for (int j = 0; j < mb; ++j) {
            double dj = a0 - x[j];
            neg[j] = dj < 0.0 ? 1.0 : 0.0;
            d[j] = std::abs(dj) < pivmin ? -pivmin : dj;
        }
        for (int i = 1; i < n; ++i) {
            const double ai = diag[i];
            const double b2 = off2[i - 1];
            for (int j = 0; j < mb; ++j) {
                const double dj = (ai - x[j]) - b2 / d[j];
                neg[j] += dj < 0.0 ? 1.0 : 0.0;
                d[j] = std::abs(dj) < pivmin ? -pivmin : dj;
            }
        }
        for (int j = 0; j < mb; ++j) counts[base + j] = static_cast<int>(neg[j]);
    }
}

inline int sturm_count(const std::vector<double>& diag, const std::vector<double>& off2,
                       double shift) {
    int c = 0;
    sturm_counts(diag, off2, &shift, 1, &c, sturm_pivmin(off2));
    return c;
}

// ---------------------------------------------------------------------------
// Symmetric banded matrices (order-4 scheme, 2-d comparison operators).
// row[b][i] holds A(i, i+b) for b = 0..bw.
// ---------------------------------------------------------------------------

struct Banded {
    int n = 0;
    int bw = 0;
    std::vector<std::vector<double>> rows;

    void init(int n_, int bw_) {
        n = n_;
        bw = bw_;
        rows.assign(bw + 1, std::vector<double>(n, 0.0));
    }
    double& at(int i, int j) {  // j >= i, j - i <= bw
        return rows[j - i][i];
    }
};

// Negative-pivot count of (A - shift), i.e. #(eigenvalues < shift), via
// banded LDL^T without pivoting; tiny pivots are pushed off zero, which can
// move an eigenvalue exactly at `shift` across, consistent with bisection
// tolerances.
inline int banded_count_below(const Banded& A, double shift) {
    const int n = A.n, p = A.bw;
    std::vector<std::vector<double>> w(p + 1, std::vector<double>(n, 0.0));
    for (int b = 0; b <= p; ++b) w[b] = A.rows[b];
    for (int i = 0; i < n; ++i) w[0][i] -= shift;
    double pivmin = 1.0;
    for (int b = 1; b <= p; ++b)
        for (double v : A.rows[b]) pivmin = std::max(pivmin, v * v);
    pivmin *= 1e-280;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        double d = w[0][i];
        if (d < 0.0) ++count;
        if (std::abs(d) < pivmin) d = -pivmin;
        const int reach = std::min(p, n - 1 - i);
        for (int r = 1; r <= reach; ++r) {
            const double f = w[r][i] / d;
            for (int c = r; c <= reach; ++c) {
                // elimination of row i+r against row i: A(i+r, i+c) -= f * A(i, i+c)
                w[c - r][i + r] -= f * w[c][i];
            }
        }
    }
    return count;
}

// ---------------------------------------------------------------------------
// Bisection by spectral index with batched count evaluations.
// ---------------------------------------------------------------------------

struct BisectTol {
    double abs_floor = 1e-12;
    double rel = 1e-12;
    double operator()(double e) const { return abs_floor + rel * std::abs(e); }
};

// Eigenvalues with 0-based indices [i0, i1), all lying in (lo, hi].
// count_fn(shifts, m, counts) must fill counts[j] = #(eigenvalues < shifts[j]).
template <typename CountFn>
std::vector<double> eigenvalues_by_index(CountFn&& count_fn, int i0, int i1, double lo, double hi,
                                         const BisectTol& tol) {
    const int m = i1 - i0;
    std::vector<double> lov(m, lo), hiv(m, hi);
    if (m <= 0) return {};

    {   // seed brackets from a shared mesh
        const int mesh = std::min(1024, std::max(16, 4 * m));
        std::vector<double> xs(mesh);
        std::vector<int> cs(mesh);
        for (int i = 0; i < mesh; ++i) xs[i] = lo + (hi - lo) * (i + 1.0) / (mesh + 1.0);
        count_fn(xs.data(), mesh, cs.data());
        for (int j = 0; j < m; ++j) {
            const int want = i0 + j + 1;  // lambda_j < x  <=>  count >= want
            for (int i = 0; i < mesh; ++i) {
                if (cs[i] >= want) { hiv[j] = std::min(hiv[j], xs[i]); break; }
                lov[j] = std::max(lov[j], xs[i]);
            }
        }
    }

    std::vector<int> active(m);
    for (int j = 0; j < m; ++j) active[j] = j;
    std::vector<double> shifts;
    std::vector<int> counts;
    while (!active.empty()) {
        const int na = static_cast<int>(active.size());
        shifts.resize(na);
        counts.resize(na);
        for (int a = 0; a < na; ++a)
            shifts[a] = 0.5 * (lov[active[a]] + hiv[active[a]]);
        count_fn(shifts.data(), na, counts.data());
        std::vector<int> still;
        still.reserve(na);
        for (int a = 0; a < na; ++a) {
            const int j = active[a];
            if (counts[a] >= i0 + j + 1) hiv[j] = shifts[a];
            else lov[j] = shifts[a];
            if (hiv[j] - lov[j] > tol(0.5 * (lov[j] + hiv[j]))) still.push_back(j);
        }
        active.swap(still);
    }
    std::vector<double> out(m);
    for (int j = 0; j < m; ++j) out[j] = 0.5 * (lov[j] + hiv[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Discretized operators
// ---------------------------------------------------------------------------

struct DiscretizedOperator {
    double h = 1.0;
    double box_halfwidth = 0.0;  // grid spans [-L, L], or (0, L] for radial
    int n_nodes = 0;
    double dx = 0.0;
    int scheme = 2;
    int channel = kNoChannel;  // angular index m (n=2) or l (n=3)
    bool radial = false;
    std::vector<double> diag;
    std::vector<double> off;   // scheme 2
    std::vector<double> off2;  // squared off-diagonals
    Banded band;               // scheme 4

    int count_below(double shift) const {
        if (scheme == 2) {
            int c = 0;
            sturm_counts(diag, off2, &shift, 1, &c, sturm_pivmin(off2));
            return c;
        }
        return banded_count_below(band, shift);
    }
};

struct SolveOptions {
    int scheme = 2;
    double nodes_per_wavelength = 40.0;  // >= 10 per the sizing rule
    int min_nodes = 2000;
    int max_nodes = 6'000'000;
    double boundary_factor = 10.0;  // V(L) - E_c >= factor * window halfwidth
    BisectTol bisect{1e-12, 1e-12};
    bool richardson = true;
    double grid_L_override = 0.0;
    int grid_N_override = 0;
};

namespace detail {

// Outermost |x| (or r) with V(x) <= E along direction sgn; germs are
// confining so marching then bisecting is safe.
inline double turning_radius(const PotentialModel& m, double E, double sgn) {
    double r = 0.5;
    Vec3 x{0.0, 0.0, 0.0};
    auto val = [&](double rr) {
        x[0] = m.x0[0] + sgn * rr;
        return m.eval(x) - E;
    };
    int guard = 0;
    while (val(r) <= 0.0) {
        r *= 1.5;
        if (++guard > 200) throw StructuralError("potential does not confine along axis");
    }
    double lo = r / 1.5, hi = r;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        (val(mid) <= 0.0 ? lo : hi) = mid;
    }
    return hi;
}

// Distance beyond the turning radius needed for the WKB decay budget.
inline double agmon_margin(const PotentialModel& m, double E, double h, double r_turn,
                           double sgn, double budget = 18.0) {
    Vec3 x{0.0, 0.0, 0.0};
    double integral = 0.0, r = r_turn;
    const double step = std::max(0.02 * r_turn, 1e-3);
    for (int it = 0; it < 100000; ++it) {
        x[0] = m.x0[0] + sgn * (r + 0.5 * step);
        const double q = m.eval(x) - E;
        if (q > 0.0) integral += std::sqrt(q) * step;
        r += step;
        if (integral >= budget * h) break;
    }
    return r - r_turn;
}

}  // namespace detail

struct Grid1D {
    double L = 0.0;
    int N = 0;
};

// Box and node count for energies up to E_top with window halfwidth eps:
// V(+-L) - E_c >= boundary_factor*eps, grid resolves the shortest local
// de Broglie wavelength with `nodes_per_wavelength` nodes, floor N = 2000.
inline Grid1D choose_grid_1d(const PotentialModel& model, double h, double E_top, double eps,
                             const SolveOptions& opt) {
    const double E_c = model.critical_energy;
    double L;
    if (opt.grid_L_override > 0.0) {
        L = opt.grid_L_override;
    } else {
        double need = std::max(E_top, E_c + opt.boundary_factor * eps);
        double rp = detail::turning_radius(model, need, +1.0);
        double rm = detail::turning_radius(model, need, -1.0);
        double tp = detail::turning_radius(model, E_top, +1.0);
        double tm = detail::turning_radius(model, E_top, -1.0);
        L = std::max(std::max(rp, rm),
                     std::max(tp + detail::agmon_margin(model, E_top, h, tp, +1.0),
                              tm + detail::agmon_margin(model, E_top, h, tm, -1.0)));
        L *= 1.02;
    }
    int N;
    if (opt.grid_N_override > 0) {
        N = opt.grid_N_override;
    } else {
        const double kmax = std::sqrt(std::max(E_top - E_c, 1e-12)) / h;
        const double dx = kTwoPi / (opt.nodes_per_wavelength * kmax);
        N = static_cast<int>(std::ceil(2.0 * L / dx));
        N = std::max(N, opt.min_nodes);
    }
    if (N > opt.max_nodes)
        throw ConfigError("grid would need " + std::to_string(N) +
                          " nodes; raise SolveOptions.max_nodes or shrink the energy range");
    return {L, N};
}

// -h^2 u'' + (V - h W) u on a Dirichlet grid over [-L, L] (interior nodes).
inline DiscretizedOperator discretize_1d(const PotentialModel& model, double h, double L, int N,
                                         int scheme, double window_top_check = 0.0,
                                         double eps_check = 0.0, double boundary_factor = 10.0) {
    if (model.dims != 1) throw PreconditionError("discretize_1d needs a 1-d model");
    if (N < 16) throw PreconditionError("N must be >= 16");
    DiscretizedOperator op;
    op.h = h;
    op.box_halfwidth = L;
    op.n_nodes = N;
    op.scheme = scheme;
    op.dx = 2.0 * L / (N + 1);
    if (eps_check > 0.0) {
        // boundary dominates the window: asserted at build time
        for (double sgn : {-1.0, 1.0}) {
            Vec3 xb{model.x0[0] + sgn * L, 0.0, 0.0};
            const double v = model.eval(xb) - model.critical_energy;
            if (v < boundary_factor * eps_check) {
                const double want = std::max(window_top_check, model.critical_energy +
                                                                   boundary_factor * eps_check);
                const double suggest = detail::turning_radius(model, want, sgn) * 1.05;
                throw ConfigError("box edge violates the boundary invariant: V(" + fmt_g(sgn * L, 6) +
                                  ") - E_c = " + fmt_g(v, 6) + " < " + fmt_g(boundary_factor * eps_check, 6) +
                                  "; suggested L >= " + fmt_g(suggest, 6));
            }
        }
    }
    const double inv = h * h / (op.dx * op.dx);
    op.diag.resize(N);
    Vec3 x{0.0, 0.0, 0.0};
    for (int i = 0; i < N; ++i) {
        x[0] = -L + (i + 1) * op.dx;
        op.diag[i] = model.eval(x, h);
    }
    if (scheme == 2) {
        for (int i = 0; i < N; ++i) op.diag[i] += 2.0 * inv;
        op.off.assign(N - 1, -inv);
        op.off2.assign(N - 1, inv * inv);
    } else if (scheme == 4) {
        op.band.init(N, 2);
        for (int i = 0; i < N; ++i) {
            op.band.rows[0][i] = op.diag[i] + 2.5 * inv;
            if (i + 1 < N) op.band.rows[1][i] = -(4.0 / 3.0) * inv;
            if (i + 2 < N) op.band.rows[2][i] = (1.0 / 12.0) * inv;
        }
    } else {
        throw ConfigError("scheme must be 2 or 4");
    }
    return op;
}

// Radial channel operator: -h^2 u'' + [h^2 c_m / r^2 + V(r) - h W(r)] u on (0, L],
// c_m = m^2 - 1/4 (n = 2) or l(l+1) (n = 3); grid starts at r = dr.
inline DiscretizedOperator discretize_radial(const PotentialModel& model, double h, int channel,
                                             double L, int N, int scheme = 2) {
    if (!model.radial || model.dims < 2)
        throw PreconditionError("radial discretization needs a radial model in dimension 2 or 3");
    DiscretizedOperator op;
    op.h = h;
    op.box_halfwidth = L;
    op.n_nodes = N;
    op.scheme = 2;
    op.radial = true;
    op.channel = channel;
    op.dx = L / (N + 1);
    const double inv = h * h / (op.dx * op.dx);
    const double cm = model.dims == 2 ? channel * channel - 0.25
                                      : static_cast<double>(channel) * (channel + 1);
    op.diag.resize(N);
    Vec3 x{0.0, 0.0, 0.0};
    for (int i = 0; i < N; ++i) {
        const double r = (i + 1) * op.dx;
        x[0] = r;  // radial germs are evaluated along an axis
        op.diag[i] = model.eval(x, h) + h * h * cm / (r * r) + 2.0 * inv;
    }
    op.off.assign(N - 1, -inv);
    op.off2.assign(N - 1, inv * inv);
    (void)scheme;
    return op;
}

// ---------------------------------------------------------------------------
// Eigenvalue windows
// ---------------------------------------------------------------------------

enum class SpectrumMethod { direct, rescaled };

inline const char* method_name(SpectrumMethod m) {
    return m == SpectrumMethod::direct ? "direct" : "rescaled";
}

struct WindowEntry {
    double lambda = 0.0;
    int multiplicity = 1;
    double est_error = 0.0;
    int channel = kNoChannel;
};

struct EigenvalueWindow {
    double center = 0.0;
    double halfwidth = 0.0;
    SpectrumMethod method = SpectrumMethod::direct;
    std::vector<WindowEntry> entries;  // ascending lambda; ties by channel
    bool edge_collision = false;       // an eigenvalue sat within tol of a window end
    double max_refinement_delta = 0.0;  // largest |fine - coarse| seen (metadata)

    int total_count() const {
        int c = 0;
        for (const auto& e : entries) c += e.multiplicity;
        return c;
    }
};

namespace detail {

struct RefinedLevels {
    std::vector<double> lambda;
    std::vector<double> err;
};

// Solve on N and 2N+1 grids, match by spectral index, Richardson-extrapolate.
inline RefinedLevels refined_levels_1d(const DiscretizedOperator& coarse,
                                       const DiscretizedOperator& fine, double lo, double hi,
                                       const BisectTol& tol) {
    auto counter = [](const DiscretizedOperator& op) {
        return [&op](const double* s, int m, int* c) {
            const double pivmin = sturm_pivmin(op.off2);
            const int chunk = 128;
            const int blocks = (m + chunk - 1) / chunk;
            parallel_for(blocks, [&](std::size_t blk) {
                const int lo_i = static_cast<int>(blk) * chunk;
                const int n_i = std::min(chunk, m - lo_i);
                sturm_counts(op.diag, op.off2, s + lo_i, n_i, c + lo_i, pivmin);
            });
        };
    };
    auto cf = counter(fine);
    auto cc = counter(coarse);
    int lo_f, hi_f;
    {
        double ss[2] = {lo, hi};
        int cnt[2];
        cf(ss, 2, cnt);
        lo_f = cnt[0];
        hi_f = cnt[1];
    }
    RefinedLevels out;
    if (hi_f <= lo_f) return out;
    std::vector<double> fine_vals = eigenvalues_by_index(cf, lo_f, hi_f, lo, hi, tol);
    // Same spectral indices on the coarse grid.  Its eigenvalues sit slightly
    // off, so widen the bracket until the counts certify it.
    double slack = 0.05 * (hi - lo) + 1.0e-6 * (std::abs(hi) + std::abs(lo)) + 1e-9;
    double clo = lo - slack, chi = hi + slack;
    for (int attempt = 0;; ++attempt) {
        double ss[2] = {clo, chi};
        int cnt[2];
        cc(ss, 2, cnt);
        if (cnt[0] <= lo_f && cnt[1] >= hi_f) break;
        if (attempt > 24) throw AccuracyError("coarse grid too far from fine grid to pair levels");
        slack *= 4.0;
        clo = lo - slack;
        chi = hi + slack;
    }
    std::vector<double> coarse_vals = eigenvalues_by_index(cc, lo_f, hi_f, clo, chi, tol);
    const int m = hi_f - lo_f;
    out.lambda.resize(m);
    out.err.resize(m);
    for (int j = 0; j < m; ++j) {
        const double lf = fine_vals[j], lc = coarse_vals[j];
        out.lambda[j] = lf + (lf - lc) / 3.0;  // order-2 scheme
        out.err[j] = std::abs(lf - lc) / 3.0 + tol(lf);
    }
    return out;
}

}  // namespace detail

// All eigenvalues of the discretized 1-d operator in [E_c - eps, E_c + eps],
// by Sturm counting + bisection, with Richardson refinement across two grids.
inline EigenvalueWindow eigenvalues_in_window(const PotentialModel& model, double h, double E_c,
                                              double eps, const SolveOptions& opt = {}) {
    if (model.dims != 1) throw PreconditionError("direct windows are 1-d; use radial_channels");
    Grid1D g = choose_grid_1d(model, h, E_c + eps, eps, opt);
    DiscretizedOperator fine = discretize_1d(model, h, g.L, 2 * g.N + 1, opt.scheme, E_c + eps,
                                             eps, opt.boundary_factor);
    DiscretizedOperator coarse = discretize_1d(model, h, g.L, g.N, opt.scheme);

    // bisection to absolute tolerance scaled by the window
    BisectTol tol{opt.bisect.abs_floor * std::max(1.0, std::abs(E_c) + eps), 0.0};

    EigenvalueWindow w;
    w.center = E_c;
    w.halfwidth = eps;
    w.method = SpectrumMethod::direct;
    auto lv = detail::refined_levels_1d(coarse, fine, E_c - eps, E_c + eps, tol);
    for (std::size_t j = 0; j < lv.lambda.size(); ++j) {
        const double l = lv.lambda[j];
        const double edge_tol = 10.0 * tol(l);
        if (std::abs(l - (E_c - eps)) <= edge_tol || std::abs(l - (E_c + eps)) <= edge_tol)
            w.edge_collision = true;  // deterministic resolution: keep it
        if (l < E_c - eps - edge_tol || l > E_c + eps + edge_tol) continue;
        w.entries.push_back({l, 1, lv.err[j], kNoChannel});
        w.max_refinement_delta = std::max(w.max_refinement_delta, 3.0 * (lv.err[j]));
    }
    return w;
}

// Merged radial-channel window for rotationally invariant models (n = 2, 3).
// Channels are included until one is empty above E_c + eps; multiplicities
// are 2 for |m| > 0 (n = 2) and 2l + 1 (n = 3).
inline EigenvalueWindow radial_channels(const PotentialModel& model, double h, double E_c,
                                        double eps, int m_max = 100000,
                                        const SolveOptions& opt = {}) {
    if (!model.radial || model.dims < 2)
        throw PreconditionError("radial_channels needs a radial model in dimension 2 or 3");
    // 1-d surrogate for the grid sizing rules: the germ restricted to an axis
    // (terms involving the other coordinates vanish there).
    PotentialModel axis(1, model.critical_energy, [&] {
        Polynomial p(1);
        for (const auto& [idx, c] : model.germ.terms())
            if (idx[1] == 0 && idx[2] == 0) p.add_term({idx[0], 0, 0}, c);
        if (p.empty()) throw StructuralError("radial germ vanishes along the first axis");
        return p;
    }());
    Grid1D g = choose_grid_1d(axis, h, E_c + eps, eps, opt);
    BisectTol tol{opt.bisect.abs_floor * std::max(1.0, std::abs(E_c) + eps), 0.0};

    EigenvalueWindow w;
    w.center = E_c;
    w.halfwidth = eps;
    w.method = SpectrumMethod::direct;

    const int block = 8;
    bool done = false;
    for (int m0 = 0; m0 <= m_max && !done; m0 += block) {
        std::vector<detail::RefinedLevels> res(block);
        parallel_for(block, [&](std::size_t b) {
            const int ch = m0 + static_cast<int>(b);
            if (ch > m_max) return;
            DiscretizedOperator fine = discretize_radial(model, h, ch, g.L, 2 * g.N + 1);
            DiscretizedOperator coarse = discretize_radial(model, h, ch, g.L, g.N);
            res[b] = detail::refined_levels_1d(coarse, fine, E_c - eps, E_c + eps, tol);
        });
        for (int b = 0; b < block; ++b) {
            const int ch = m0 + b;
            if (ch > m_max) break;
            if (res[b].lambda.empty()) { done = true; break; }
            const int mult = model.dims == 2 ? (ch == 0 ? 1 : 2) : 2 * ch + 1;
            for (std::size_t j = 0; j < res[b].lambda.size(); ++j) {
                const double l = res[b].lambda[j];
                if (l < E_c - eps || l > E_c + eps) continue;
                w.entries.push_back({l, mult, res[b].err[j], ch});
                w.max_refinement_delta = std::max(w.max_refinement_delta, 3.0 * res[b].err[j]);
            }
        }
    }
    if (!done)
        throw IncompleteSweepError("radial sweep reached m_max = " + std::to_string(m_max) +
                                   " before the channel cutoff");
    std::stable_sort(w.entries.begin(), w.entries.end(), [](const WindowEntry& a, const WindowEntry& b) {
        if (a.lambda != b.lambda) return a.lambda < b.lambda;
        return a.channel < b.channel;
    });
    return w;
}

// ---------------------------------------------------------------------------
// Exact h-rescaling for homogeneous germs.
//
// For V = V_k homogeneous and W = 0, the substitution y = h^{2/(k+2)} x maps
// -h^2 Lap + V_k to h^{2k/(k+2)} (-Lap + V_k), so the spectrum is
// lambda_j(h) = E_c + h^{2k/(k+2)} e_j with h-independent model levels e_j.
// The e_j are computed once at h = 1 and cached.
// ---------------------------------------------------------------------------

inline double rescaling_exponent(int k) { return 2.0 * k / (k + 2.0); }

struct ModelLevel {
    double e = 0.0;
    double err = 0.0;
    int channel = kNoChannel;
    int multiplicity = 1;
};

class ModelSpectrumCache {
public:
    explicit ModelSpectrumCache(const PotentialModel& model) : model_(model) {
        if (!model.homogeneous())
            throw PreconditionError("exact rescaling needs a homogeneous germ without W");
        // strip E_c: the cache is for -Lap + germ alone
        model_.critical_energy = 0.0;
    }

    double top() const { return top_; }

    // Make sure levels cover [0, e_top]; rebuilds (with headroom) if not.
    void ensure(double e_top, const SolveOptions& opt = cache_options()) {
        if (e_top <= top_) return;
        levels_.clear();
        const double target = 1.12 * e_top;
        if (model_.dims == 1) {
            EigenvalueWindow w = eigenvalues_in_window(model_, 1.0, target / 2.0, target / 2.0, opt);
            for (const auto& en : w.entries) levels_.push_back({en.lambda, en.est_error, kNoChannel, 1});
        } else {
            EigenvalueWindow w = radial_channels(model_, 1.0, target / 2.0, target / 2.0, 100000, opt);
            for (const auto& en : w.entries)
                levels_.push_back({en.lambda, en.est_error, en.channel, en.multiplicity});
        }
        top_ = target;
    }

    // Levels e_j <= cap (ascending); throws if the cache has not been
    // extended far enough.
    std::span<const ModelLevel> levels_below(double cap) const {
        if (cap > top_)
            throw CacheExtensionRequired("model spectrum cached to " + fmt_g(top_, 6) +
                                         " but " + fmt_g(cap, 6) + " requested");
        std::size_t n = 0;
        while (n < levels_.size() && levels_[n].e <= cap) ++n;
        return {levels_.data(), n};
    }

    const PotentialModel& model() const { return model_; }

    static SolveOptions cache_options() {
        SolveOptions o;
        o.nodes_per_wavelength = 12.6;  // the Richardson pair controls the error
        o.bisect = BisectTol{1e-12, 1e-12};
        return o;
    }

private:
    PotentialModel model_;
    double top_ = 0.0;
    std::vector<ModelLevel> levels_;
};

// Window [E_c - cap, E_c + cap] by exact rescaling of cached model levels.
inline EigenvalueWindow rescaled_spectrum(const PotentialModel& model, double h, double cap,
                                          ModelSpectrumCache& cache) {
    if (!model.homogeneous())
        throw PreconditionError("exact rescaling needs a homogeneous germ without W");
    const int k = model.germ_degree();
    const double scale = std::pow(h, rescaling_exponent(k));
    EigenvalueWindow w;
    w.center = model.critical_energy;
    w.halfwidth = cap;
    w.method = SpectrumMethod::rescaled;
    for (const ModelLevel& ml : cache.levels_below(cap / scale)) {
        w.entries.push_back({model.critical_energy + scale * ml.e, ml.multiplicity,
                             scale * ml.err, ml.channel});
    }
    return w;
}

}  // namespace semitrace
