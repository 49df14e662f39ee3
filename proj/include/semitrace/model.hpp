#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "semitrace/polynomial.hpp"
#include "semitrace/quadrature.hpp"

namespace semitrace {

inline double sphere_surface(int n) {
    switch (n) {
        case 1: return 2.0;        // counting measure on {-1,+1}
        case 2: return kTwoPi;     // arclength of S^1
        case 3: return 2.0 * kTwoPi;  // area of S^2
        default: throw StructuralError("dimension must be 1..3");
    }
}

// Visit a deterministic dense sample of the unit sphere, then `extra` seeded
// random directions.  Dense part: endpoints (n=1), equispaced angles (n=2),
// Gauss-Legendre x azimuth grid (n=3).
template <typename Fn>
void for_each_sphere_sample(int n, int dense, int extra, std::uint64_t seed, Fn&& fn) {
    if (n == 1) {
        fn(Vec3{1.0, 0.0, 0.0});
        fn(Vec3{-1.0, 0.0, 0.0});
    } else if (n == 2) {
        for (int i = 0; i < dense; ++i) {
            double th = kTwoPi * i / dense;
            fn(Vec3{std::cos(th), std::sin(th), 0.0});
        }
    } else {
        int q = std::max(4, static_cast<int>(std::sqrt(static_cast<double>(dense) / 2.0)));
        const GaussLegendre& g = gauss_legendre(q);
        for (int i = 0; i < q; ++i) {
            double c = g.x[i], s = std::sqrt(std::max(0.0, 1.0 - c * c));
            for (int j = 0; j < 2 * q; ++j) {
                double ph = kTwoPi * j / (2 * q);
                fn(Vec3{s * std::cos(ph), s * std::sin(ph), c});
            }
        }
    }
    if (extra > 0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int i = 0; i < extra; ++i) {
            Vec3 v{0.0, 0.0, 0.0};
            double r = 0.0;
            while (r < 1e-8) {
                for (int d = 0; d < n; ++d) v[d] = gauss(rng);
                r = norm(v, n);
            }
            for (int d = 0; d < n; ++d) v[d] /= r;
            fn(v);
        }
    }
}

// ---------------------------------------------------------------------------
// HomogeneousForm: one homogeneous term of the germ; the lowest one carries
// the whole leading-order prediction.
// ---------------------------------------------------------------------------

struct HomogeneousForm {
    int dims = 1;
    int degree = 0;
    Polynomial poly;

    HomogeneousForm() = default;
    HomogeneousForm(int n, const Polynomial& p) : dims(n), poly(p) {
        if (p.empty()) throw StructuralError("homogeneous form has no terms");
        auto degs = p.degrees_present();
        if (degs.size() != 1)
            throw StructuralError("homogeneous form mixes degrees " + p.str());
        degree = *degs.begin();
    }

    double value(const Vec3& eta) const { return poly.eval(eta); }

    bool degree_even_ge4() const { return degree >= 4 && degree % 2 == 0; }

    // Minimum over a dense + random sphere sample; the positivity floor
    // guards integrability of |V_k|^(-n/k).
    double min_on_sphere(int dense = 512, int extra = 1000, std::uint64_t seed = 12345) const {
        double mn = std::numeric_limits<double>::infinity();
        for_each_sphere_sample(dims, dense, extra, seed,
                               [&](const Vec3& eta) { mn = std::min(mn, value(eta)); });
        return mn;
    }

    bool positive_definite(double floor = 1e-9, int dense = 512, int extra = 1000,
                           std::uint64_t seed = 12345) const {
        return min_on_sphere(dense, extra, seed) > floor;
    }

    // value(s*eta) = s^degree * value(eta) up to roundoff; false means the
    // stored polynomial is not actually homogeneous (construction bug).
    bool homogeneity_holds(double rel_tol = 1e-12, std::uint64_t seed = 99) const {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (int trial = 0; trial < 32; ++trial) {
            Vec3 eta{0.0, 0.0, 0.0};
            for (int d = 0; d < dims; ++d) eta[d] = uni(rng);
            for (double s : {0.5, 1.3, 2.7}) {
                Vec3 se = eta;
                for (int d = 0; d < dims; ++d) se[d] *= s;
                double lhs = value(se);
                double rhs = std::pow(s, degree) * value(eta);
                double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
                if (std::abs(lhs - rhs) > rel_tol * scale * 8) return false;
            }
        }
        return true;
    }
};

struct SphereQuadratureSpec {
    int nodes_2d = 512;   // equispaced angles on S^1
    int nodes_3d = 64;    // Gauss-Legendre order in cos(theta); azimuth uses 2x
    double positivity_floor = 1e-9;
};

// Integral over S^{n-1} of |form|^exponent; S^0 carries counting measure.
inline double sphere_integral(const HomogeneousForm& form, double exponent,
                              const SphereQuadratureSpec& spec = {}) {
    auto powval = [&](const Vec3& eta) {
        double v = form.value(eta);
        if (v <= spec.positivity_floor && exponent < 0.0)
            throw DefinitenessError("form not positive at sphere node (value " + fmt_g(v, 6) + ")");
        return std::pow(std::abs(v), exponent);
    };
    if (form.dims == 1) {
        return powval(Vec3{1.0, 0.0, 0.0}) + powval(Vec3{-1.0, 0.0, 0.0});
    }
    if (form.dims == 2) {
        return integrate_periodic(
            [&](double th) { return powval(Vec3{std::cos(th), std::sin(th), 0.0}); },
            kTwoPi, spec.nodes_2d);
    }
    const GaussLegendre& g = gauss_legendre(spec.nodes_3d);
    const int naz = 2 * spec.nodes_3d;
    double sum = 0.0;
    for (int i = 0; i < spec.nodes_3d; ++i) {
        double c = g.x[i], s = std::sqrt(std::max(0.0, 1.0 - c * c));
        double ring = 0.0;
        for (int j = 0; j < naz; ++j) {
            double ph = kTwoPi * j / naz;
            ring += powval(Vec3{s * std::cos(ph), s * std::sin(ph), c});
        }
        sum += g.w[i] * ring * (kTwoPi / naz);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// PotentialModel: V(x) = E_c + germ(x - x0), with an optional first-order
// correction entering the operator as -h*W(x - x0).
//
// The germ polynomial may contain degree-1/2 terms so that hypothesis
// validation can exhibit their failure; well-formed models never do.
// ---------------------------------------------------------------------------

struct PotentialModel {
    int dims = 1;
    double critical_energy = 0.0;
    Vec3 x0{0.0, 0.0, 0.0};
    Polynomial germ;          // in displaced coordinates y = x - x0
    Polynomial subprincipal;  // W, same coordinates; empty when absent
    bool radial = false;

    PotentialModel() : germ(1), subprincipal(1) {}
    PotentialModel(int n, double ec, const Polynomial& g)
        : dims(n), critical_energy(ec), germ(g), subprincipal(n) {
        if (g.dims() != n) throw StructuralError("germ dimension mismatch");
    }

    bool free_particle() const { return germ.empty(); }

    int germ_degree() const {
        int k = germ.lowest_degree();
        if (k < 0) throw StructuralError("potential has an empty germ");
        return k;
    }

    // Exactly one homogeneous degree and no subprincipal term: eigenvalues
    // scale out of h exactly.
    bool homogeneous() const {
        return !germ.empty() && germ.degrees_present().size() == 1 && subprincipal.empty();
    }

    HomogeneousForm leading_form() const {
        return HomogeneousForm(dims, germ.homogeneous_part(germ_degree()));
    }

    Vec3 displaced(const Vec3& x) const {
        Vec3 y{0.0, 0.0, 0.0};
        for (int d = 0; d < dims; ++d) y[d] = x[d] - x0[d];
        return y;
    }

    double eval(const Vec3& x, double h = 0.0) const {
        Vec3 y = displaced(x);
        double v = critical_energy + germ.eval(y);
        if (!subprincipal.empty() && h != 0.0) v -= h * subprincipal.eval(y);
        return v;
    }

    // Gradient of the h-independent part.
    Vec3 eval_gradient(const Vec3& x) const {
        return germ.eval_gradient(displaced(x));
    }
};

// 1-d convenience used all over the tests: V = E_c + sum c_p (x-x0)^p.
inline PotentialModel model_1d(std::initializer_list<std::pair<int, double>> powers,
                               double ec = 0.0, double x0 = 0.0) {
    Polynomial g(1);
    for (const auto& [p, c] : powers) g.add_term({p, 0, 0}, c);
    PotentialModel m(1, ec, g);
    m.x0[0] = x0;
    return m;
}

// ---------------------------------------------------------------------------
// Hypothesis validation
// ---------------------------------------------------------------------------

struct Box {
    Vec3 lo{0.0, 0.0, 0.0};
    Vec3 hi{0.0, 0.0, 0.0};
    static Box centered(int n, double half) {
        Box b;
        for (int d = 0; d < n; ++d) { b.lo[d] = -half; b.hi[d] = half; }
        return b;
    }
};

struct HypothesisCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct HypothesisReport {
    std::vector<HypothesisCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    const HypothesisCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

struct ValidationOptions {
    std::uint64_t seed = 12345;
    int sphere_dense = 512;
    int sphere_random = 1000;
    double positivity_floor = 1e-9;
    int boundary_samples = 33;  // per face edge
    int grid_per_dim = 41;      // critical-point search grid
};

namespace detail {

// Solve A s = b for tiny n (Gaussian elimination with partial pivoting).
inline bool solve_small(int n, double A[3][3], double b[3], double s[3]) {
    int perm[3] = {0, 1, 2};
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(A[perm[r]][c]) > std::abs(A[perm[piv]][c])) piv = r;
        std::swap(perm[c], perm[piv]);
        if (std::abs(A[perm[c]][c]) < 1e-14) return false;
        for (int r = c + 1; r < n; ++r) {
            double f = A[perm[r]][c] / A[perm[c]][c];
            for (int cc = c; cc < n; ++cc) A[perm[r]][cc] -= f * A[perm[c]][cc];
            b[perm[r]] -= f * b[perm[c]];
        }
    }
    for (int c = n - 1; c >= 0; --c) {
        double v = b[perm[c]];
        for (int cc = c + 1; cc < n; ++cc) v -= A[perm[c]][cc] * s[cc];
        s[c] = v / A[perm[c]][c];
    }
    return true;
}

// Newton polish of grad(germ) = 0 starting at y (displaced coordinates).
// Returns the final iterate together with its gradient norm; the caller
// classifies it against model scales.
inline std::optional<std::pair<Vec3, double>> newton_critical_point(const PotentialModel& m,
                                                                    Vec3 y) {
    const int n = m.dims;
    std::vector<Polynomial> grad = m.germ.gradient();
    std::vector<std::vector<Polynomial>> hess(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) hess[i].push_back(grad[i].derivative(j));
    auto grad_norm = [&](const Vec3& p) {
        double gn = 0.0;
        for (int i = 0; i < n; ++i) {
            const double gi = grad[i].eval(p);
            gn += gi * gi;
        }
        return std::sqrt(gn);
    };
    for (int it = 0; it < 200; ++it) {
        double g[3] = {0, 0, 0};
        for (int i = 0; i < n; ++i) g[i] = grad[i].eval(y);
        double A[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A[i][j] = hess[i][j].eval(y);
        // Levenberg damping keeps steps sane near the degenerate origin.
        for (int i = 0; i < n; ++i) A[i][i] += 1e-14 * (1.0 + std::abs(A[i][i]));
        double b[3] = {-g[0], -g[1], -g[2]};
        double s[3] = {0, 0, 0};
        if (!solve_small(n, A, b, s)) return std::nullopt;
        double step = 0.0;
        for (int i = 0; i < n; ++i) { y[i] += s[i]; step += s[i] * s[i]; }
        if (std::sqrt(step) < 1e-14 * (1.0 + norm(y, n))) break;
    }
    return std::make_pair(y, grad_norm(y));
}

template <typename Fn>
void for_each_boundary_sample(const Box& box, int n, int m, Fn&& fn) {
    if (n == 1) {
        fn(Vec3{box.lo[0], 0.0, 0.0});
        fn(Vec3{box.hi[0], 0.0, 0.0});
        return;
    }
    auto lin = [&](int d, int i) {
        return box.lo[d] + (box.hi[d] - box.lo[d]) * i / (m - 1);
    };
    if (n == 2) {
        for (int face = 0; face < 2; ++face) {
            for (int i = 0; i < m; ++i) {
                fn(Vec3{face ? box.hi[0] : box.lo[0], lin(1, i), 0.0});
                fn(Vec3{lin(0, i), face ? box.hi[1] : box.lo[1], 0.0});
            }
        }
        return;
    }
    for (int face = 0; face < 2; ++face) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                fn(Vec3{face ? box.hi[0] : box.lo[0], lin(1, i), lin(2, j)});
                fn(Vec3{lin(0, i), face ? box.hi[1] : box.lo[1], lin(2, j)});
                fn(Vec3{lin(0, i), lin(1, j), face ? box.hi[2] : box.lo[2]});
            }
        }
    }
}

}  // namespace detail

// Check (H1)-(H3) surrogates on a concrete box and window.  Structural
// defects (empty germ, dimension mismatches) throw instead of reporting.
inline HypothesisReport validate_hypotheses(const PotentialModel& model, double window_halfwidth,
                                            const Box& box, const ValidationOptions& opt = {}) {
    if (model.germ.empty())
        throw StructuralError("potential has an empty germ; nothing to validate");
    HypothesisReport rep;
    auto degs = model.germ.degrees_present();

    {   // Degenerate critical point: no linear or quadratic germ terms.
        bool bad = degs.count(1) || degs.count(2);
        std::string detail = bad ? "germ contains degree-1/2 terms: " : "gradient and Hessian vanish at x0";
        if (bad) {
            if (degs.count(1)) detail += "[degree 1] ";
            if (degs.count(2)) detail += "[degree 2]";
        }
        rep.checks.push_back({"hessian_degenerate", !bad, detail});
    }

    const int k = *degs.begin();
    {
        bool ok = k >= 4 && k % 2 == 0;
        rep.checks.push_back({"germ_degree_even_ge4", ok, "k = " + std::to_string(k)});
    }

    {   // Positive-definiteness of the leading form on the sphere sample.
        Polynomial vk = model.germ.homogeneous_part(k);
        bool ok = false;
        std::string detail;
        try {
            HomogeneousForm form(model.dims, vk);
            double mn = form.min_on_sphere(opt.sphere_dense, opt.sphere_random, opt.seed);
            ok = mn > opt.positivity_floor;
            detail = "min V_k on sphere sample = " + fmt_g(mn, 6);
        } catch (const StructuralError& e) {
            detail = e.what();
        }
        rep.checks.push_back({"germ_positive_definite", ok, detail});
    }

    {   // Confinement proxy: V - E_c > window on the box boundary.
        bool ok = true;
        std::string witness;
        detail::for_each_boundary_sample(box, model.dims, opt.boundary_samples, [&](const Vec3& x) {
            double v = model.eval(x) - model.critical_energy;
            if (v <= window_halfwidth && ok) {
                ok = false;
                witness = "V - E_c = " + fmt_g(v, 6) + " at x = (" + fmt_g(x[0], 6);
                for (int d = 1; d < model.dims; ++d) witness += ", " + fmt_g(x[d], 6);
                witness += ")";
            }
        });
        rep.checks.push_back({"boundary_confinement", ok,
                              ok ? "V - E_c > window half-width on boundary sample" : witness});
    }

    {   // No second critical value at or below E_c + window inside the box.
        bool ok = true;
        std::string witness;
        const int g = opt.grid_per_dim;
        const int n = model.dims;
        double box_scale = 0.0;
        for (int d = 0; d < n; ++d) box_scale = std::max(box_scale, box.hi[d] - box.lo[d]);
        // gradient scale for classifying Newton limits as genuine criticals
        double grad_scale = 1.0;
        detail::for_each_boundary_sample(box, n, 5, [&](const Vec3& x) {
            grad_scale = std::max(grad_scale, norm(model.eval_gradient(x), n));
        });
        const double origin_gate = std::max(1e-5, 1e-4 * box_scale);
        std::vector<Vec3> found;
        auto consider = [&](Vec3 start) {
            auto crit = detail::newton_critical_point(model, start);
            if (!crit) return;
            Vec3 y = crit->first;
            if (crit->second > 1e-9 * grad_scale) return;  // Newton stalled, not critical
            // inside box? (displaced coordinates, box is in x)
            for (int d = 0; d < n; ++d) {
                double xd = y[d] + model.x0[d];
                if (xd < box.lo[d] - 1e-9 || xd > box.hi[d] + 1e-9) return;
            }
            if (norm(y, n) < origin_gate) return;  // the designated critical point
            for (const auto& f : found)
                if (norm(axpy(-1.0, f, y, n), n) < origin_gate) return;
            found.push_back(y);
            double v = model.critical_energy + model.germ.eval(y);
            if (v <= model.critical_energy + window_halfwidth && ok) {
                ok = false;
                witness = "critical point at x0 + (" + fmt_g(y[0], 6);
                for (int d = 1; d < n; ++d) witness += ", " + fmt_g(y[d], 6);
                witness += ") with V = " + fmt_g(v, 6);
            }
        };
        int total = 1;
        for (int d = 0; d < n; ++d) total *= g;
        for (int cell = 0; cell < total; ++cell) {
            int rem = cell;
            Vec3 y{0.0, 0.0, 0.0};
            for (int d = 0; d < n; ++d) {
                int i = rem % g;
                rem /= g;
                double x = box.lo[d] + (box.hi[d] - box.lo[d]) * i / (g - 1);
                y[d] = x - model.x0[d];
            }
            consider(y);
        }
        rep.checks.push_back({"isolated_critical_level", ok,
                              ok ? "no second critical value below E_c + window in box" : witness});
    }

    if (model.radial) {  // declared rotational invariance must hold
        bool ok = true;
        std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (int trial = 0; trial < 64 && ok && model.dims >= 2; ++trial) {
            Vec3 y{uni(rng), uni(rng), model.dims == 3 ? uni(rng) : 0.0};
            double th = kPi * uni(rng);
            Vec3 ry = y;
            // rotate in the (0,1)-plane; for n=3 also a (1,2)-plane rotation
            ry[0] = std::cos(th) * y[0] - std::sin(th) * y[1];
            ry[1] = std::sin(th) * y[0] + std::cos(th) * y[1];
            if (model.dims == 3) {
                double th2 = kPi * uni(rng);
                double a = ry[1], b = ry[2];
                ry[1] = std::cos(th2) * a - std::sin(th2) * b;
                ry[2] = std::sin(th2) * a + std::cos(th2) * b;
            }
            double v1 = model.germ.eval(y), v2 = model.germ.eval(ry);
            if (std::abs(v1 - v2) > 1e-10 * std::max({std::abs(v1), std::abs(v2), 1.0})) ok = false;
        }
        rep.checks.push_back({"radial_flag_consistent", ok,
                              ok ? "germ invariant under sampled rotations" : "germ not rotation invariant"});
    }

    return rep;
}

// ---------------------------------------------------------------------------
// Potential definition files.
//
//   # comment
//   n 1
//   E_c 0.0
//   x0 0.0
//   radial false
//   germ 4 1.0          # multi-index (n exponents) then coefficient
//   term 6 -1.0         # like germ, but degree 1/2 admitted (validation will flag)
//   W 2 12.0            # subprincipal monomial
//
// Monomials are in displaced coordinates y = x - x0.  `germ` lines reject
// total degree < 3; raw `term` lines exist so that excluded potentials can
// still be fed to the validator.
// ---------------------------------------------------------------------------

inline PotentialModel parse_potential_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    int n = 0;
    bool have_ec = false;
    double ec = 0.0;
    Vec3 x0{0.0, 0.0, 0.0};
    bool radial = false;
    std::vector<std::tuple<Polynomial::Index, double, bool>> monomials;  // idx, coeff, is_W
    auto fail = [&](const std::string& msg, int col) { throw ConfigError(msg, lineno, col); };

    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "n") {
            if (!(ls >> n) || n < 1 || n > 3) fail("n must be 1, 2 or 3", 1);
        } else if (key == "E_c") {
            if (!(ls >> ec)) fail("E_c expects a number", 1);
            have_ec = true;
        } else if (key == "x0") {
            if (n == 0) fail("x0 before n", 1);
            for (int d = 0; d < n; ++d)
                if (!(ls >> x0[d])) fail("x0 expects n numbers", 1);
        } else if (key == "radial") {
            std::string v;
            ls >> v;
            if (v == "true") radial = true;
            else if (v == "false") radial = false;
            else fail("radial expects true or false", 1);
        } else if (key == "germ" || key == "term" || key == "W") {
            if (n == 0) fail(key + " before n", 1);
            Polynomial::Index idx{0, 0, 0};
            for (int d = 0; d < n; ++d) {
                if (!(ls >> idx[d]) || idx[d] < 0) fail(key + " expects n nonnegative exponents", d + 1);
            }
            double c;
            if (!(ls >> c)) fail(key + " expects a coefficient", n + 1);
            int deg = idx[0] + idx[1] + idx[2];
            if (key == "germ" && deg < 3)
                fail("germ monomial of total degree " + std::to_string(deg) +
                     " rejected (degenerate-minimum germs start at degree >= 4); use a `term` "
                     "line to feed excluded potentials to the validator", 1);
            if (key != "W" && deg < 1)
                fail("constant terms belong in E_c", 1);
            monomials.emplace_back(idx, c, key == "W");
        } else {
            fail("unknown key '" + key + "'", 1);
        }
        std::string trailing;
        if (ls >> trailing) fail("trailing token '" + trailing + "'", 1);
    }
    if (n == 0) throw ConfigError("potential definition missing n");
    if (!have_ec) throw ConfigError("potential definition missing E_c");
    Polynomial germ(n), w(n);
    for (const auto& [idx, c, is_w] : monomials) (is_w ? w : germ).add_term(idx, c);
    if (germ.empty()) throw ConfigError("potential definition has no germ/term monomials");
    PotentialModel m(n, ec, germ);
    m.x0 = x0;
    m.subprincipal = w;
    m.radial = radial;
    return m;
}

inline std::string write_potential_text(const PotentialModel& m) {
    std::string out;
    out += "n " + std::to_string(m.dims) + "\n";
    out += "E_c " + fmt_g17(m.critical_energy) + "\n";
    out += "x0";
    for (int d = 0; d < m.dims; ++d) out += " " + fmt_g17(m.x0[d]);
    out += "\n";
    out += std::string("radial ") + (m.radial ? "true" : "false") + "\n";
    for (const auto& [idx, c] : m.germ.terms()) {
        int deg = idx[0] + idx[1] + idx[2];
        out += (deg < 3 ? "term" : "germ");
        for (int d = 0; d < m.dims; ++d) out += " " + std::to_string(idx[d]);
        out += " " + fmt_g17(c) + "\n";
    }
    for (const auto& [idx, c] : m.subprincipal.terms()) {
        out += "W";
        for (int d = 0; d < m.dims; ++d) out += " " + std::to_string(idx[d]);
        out += " " + fmt_g17(c) + "\n";
    }
    return out;
}

}  // namespace semitrace
