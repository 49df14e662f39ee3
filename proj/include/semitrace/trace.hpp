#pragma once

#include <optional>

#include "semitrace/spectral.hpp"
#include "semitrace/testfn.hpp"
#include "semitrace/volume.hpp"

namespace semitrace {

struct TraceSample {
    double h = 0.0;
    double gamma = 0.0;
    long n_terms = 0;                  // multiplicity-weighted terms summed
    double truncation_residual = 0.0;  // bound on the neglected phi tail
    SpectrumMethod method = SpectrumMethod::direct;
};

// gamma(E_c, h, phi) = sum over the window of mult * phi((lambda - E_c)/h).
// Ascending compensated summation; terms beyond the phi tail cutoff are
// dropped and bounded into truncation_residual.  `phi` may be a certified
// proxy; `extra_count_bound` lets the caller account for window shell parts
// that were never enumerated (capped windows).
template <typename PhiFn>
TraceSample spectral_side(const EigenvalueWindow& w, double E_c, double h, PhiFn&& phi,
                          double term_tol, double s_cut, double extra_count_bound = 0.0) {
    TraceSample out;
    out.h = h;
    out.method = w.method;
    double sum = 0.0, comp = 0.0;
    long beyond = 0;
    for (const auto& en : w.entries) {
        const double s = (en.lambda - E_c) / h;
        if (std::abs(s) > s_cut) {
            beyond += en.multiplicity;
            continue;
        }
        const double term = en.multiplicity * phi(s);
        // Neumaier compensation keeps the sum deterministic across providers
        const double t = sum + term;
        if (std::abs(sum) >= std::abs(term)) comp += (sum - t) + term;
        else comp += (term - t) + sum;
        sum = t;
        out.n_terms += en.multiplicity;
    }
    out.gamma = sum + comp;
    out.truncation_residual = (static_cast<double>(beyond) + extra_count_bound) * term_tol;
    return out;
}

inline TraceSample spectral_side(const EigenvalueWindow& w, double E_c, double h,
                                 const TestFunction& tf, double trunc_tol_rel = 1e-12) {
    const double term_tol = trunc_tol_rel * tf.phi_sup();
    const double s_cut = tf.tail_cutoff(term_tol);
    return spectral_side(
        w, E_c, h, [&](double s) { return tf.eval_phi(s); }, term_tol, s_cut);
}

// ---------------------------------------------------------------------------
// Trace curves over an h schedule
// ---------------------------------------------------------------------------

enum class TraceMethod { direct, rescaled, both };

inline TraceMethod trace_method_from_name(const std::string& s) {
    if (s == "direct") return TraceMethod::direct;
    if (s == "rescaled") return TraceMethod::rescaled;
    if (s == "both") return TraceMethod::both;
    throw ConfigError("unknown trace method '" + s + "'");
}

struct TraceCurveOptions {
    double trunc_tol_rel = 1e-12;  // term cutoff as a fraction of sup|phi|
    SolveOptions direct_solve;
    SolveOptions cache_solve = ModelSpectrumCache::cache_options();
};

struct TraceFailure {
    double h = 0.0;
    std::string message;
};

struct TraceCurve {
    std::vector<TraceSample> samples;  // ordered as requested; both methods interleaved per h
    std::vector<TraceFailure> failures;
};

// One sample per h using the requested method(s).  The spectral window is
// capped at the phi tail cutoff; the unenumerated shell of [E_c - eps, E_c + eps]
// is bounded via the Weyl estimate and reported in truncation_residual.
inline TraceCurve trace_curve(const PotentialModel& model, const TestFunction& tf, double E_c,
                              double eps, const std::vector<double>& h_list, TraceMethod method,
                              const TraceCurveOptions& opt = {},
                              ModelSpectrumCache* cache = nullptr) {
    for (std::size_t i = 0; i < h_list.size(); ++i) {
        if (h_list[i] <= 0.0) throw PreconditionError("h schedule must be positive");
        if (i > 0 && h_list[i] >= h_list[i - 1])
            throw PreconditionError("h schedule must be strictly decreasing");
    }
    const double term_tol = opt.trunc_tol_rel * tf.phi_sup();
    const double s_cut = tf.tail_cutoff(term_tol);
    PiecewiseChebyshev proxy = tf.phi_proxy(s_cut * 1.02 + 1.0);
    auto phi = [&](double s) { return proxy(std::sqrt(std::abs(s))); };

    TraceCurve out;
    const bool want_rescaled = method != TraceMethod::direct;
    const bool want_direct = method != TraceMethod::rescaled;

    std::optional<ModelSpectrumCache> local_cache;
    if (want_rescaled) {
        if (!cache) {
            local_cache.emplace(model);
            cache = &*local_cache;
        }
        double top_needed = 0.0;
        const double expo = rescaling_exponent(model.germ_degree());
        for (double h : h_list) {
            const double cap = std::min(eps, h * s_cut);
            top_needed = std::max(top_needed, cap / std::pow(h, expo));
        }
        cache->ensure(top_needed, opt.cache_solve);
    }

    for (double h : h_list) {
        const double cap = std::min(eps, h * s_cut);
        // Shell [cap, eps] never enumerated; bound its count by Weyl.
        double shell = 0.0;
        if (cap < eps)
            shell = weyl_count_estimate(model, h, E_c + cap, E_c + eps) +
                    weyl_count_estimate(model, h, E_c - eps, E_c - cap);
        if (want_rescaled) {
            try {
                EigenvalueWindow w = rescaled_spectrum(model, h, cap, *cache);
                out.samples.push_back(
                    spectral_side(w, E_c, h, phi, term_tol, s_cut, shell));
            } catch (const Error& e) {
                out.failures.push_back({h, std::string("rescaled: ") + e.what()});
            }
        }
        if (want_direct) {
            try {
                EigenvalueWindow w;
                if (model.dims == 1) {
                    w = eigenvalues_in_window(model, h, E_c, cap, opt.direct_solve);
                } else {
                    w = radial_channels(model, h, E_c, cap, 100000, opt.direct_solve);
                }
                out.samples.push_back(
                    spectral_side(w, E_c, h, phi, term_tol, s_cut, shell));
            } catch (const Error& e) {
                out.failures.push_back({h, std::string("direct: ") + e.what()});
            }
        }
    }
    return out;
}

}  // namespace semitrace
