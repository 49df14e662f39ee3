#pragma once

#include <vector>

#include "semitrace/common.hpp"

namespace semitrace {

struct ConditioningError : Error {
    double condition = 0.0;
    ConditioningError(const std::string& msg, double cond)
        : Error(msg + " (condition number " + fmt_g(cond, 4) + ")"), condition(cond) {}
};

struct LsqFit {
    std::vector<double> coef;
    double residual_norm = 0.0;
    double condition = 0.0;
};

// Dense least squares for a handful of columns: Householder QR with a
// condition estimate from the Jacobi eigenvalues of R^T R.
inline LsqFit least_squares(std::vector<std::vector<double>> cols, std::vector<double> rhs) {
    const int p = static_cast<int>(cols.size());
    const int m = static_cast<int>(rhs.size());
    if (p == 0 || m < p) throw PreconditionError("least squares needs more samples than unknowns");
    for (const auto& c : cols)
        if (static_cast<int>(c.size()) != m) throw StructuralError("ragged design matrix");

    // Householder QR, applying reflections to rhs as we go.
    std::vector<std::vector<double>>& A = cols;
    for (int j = 0; j < p; ++j) {
        double nrm = 0.0;
        for (int i = j; i < m; ++i) nrm += A[j][i] * A[j][i];
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) throw ConditioningError("rank-deficient design matrix", 1e300);
        const double alpha = A[j][j] > 0 ? -nrm : nrm;
        std::vector<double> v(m, 0.0);
        v[j] = A[j][j] - alpha;
        for (int i = j + 1; i < m; ++i) v[i] = A[j][i];
        double vtv = 0.0;
        for (int i = j; i < m; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0) continue;
        auto reflect = [&](std::vector<double>& w) {
            double s = 0.0;
            for (int i = j; i < m; ++i) s += v[i] * w[i];
            s *= 2.0 / vtv;
            for (int i = j; i < m; ++i) w[i] -= s * v[i];
        };
        for (int jj = j; jj < p; ++jj) reflect(A[jj]);
        reflect(rhs);
    }

    // Back substitution on the p x p triangle.
    LsqFit out;
    out.coef.assign(p, 0.0);
    for (int j = p - 1; j >= 0; --j) {
        double v = rhs[j];
        for (int jj = j + 1; jj < p; ++jj) v -= A[jj][j] * out.coef[jj];
        if (A[j][j] == 0.0) throw ConditioningError("singular R in QR", 1e300);
        out.coef[j] = v / A[j][j];
    }
    double rn = 0.0;
    for (int i = p; i < m; ++i) rn += rhs[i] * rhs[i];
    out.residual_norm = std::sqrt(rn);

    // Condition of R via Jacobi on R^T R (p is tiny).
    std::vector<std::vector<double>> G(p, std::vector<double>(p, 0.0));
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            double s = 0.0;
            for (int r = 0; r <= std::min(i, j); ++r) s += A[i][r] * A[j][r];
            G[i][j] = s;
        }
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < p; ++i)
            for (int j = i + 1; j < p; ++j) off += G[i][j] * G[i][j];
        if (off < 1e-30) break;
        for (int i = 0; i < p; ++i)
            for (int j = i + 1; j < p; ++j) {
                if (std::abs(G[i][j]) < 1e-300) continue;
                const double theta = 0.5 * std::atan2(2.0 * G[i][j], G[i][i] - G[j][j]);
                const double c = std::cos(theta), s = std::sin(theta);
                for (int r = 0; r < p; ++r) {
                    const double gi = G[i][r], gj = G[j][r];
                    G[i][r] = c * gi + s * gj;
                    G[j][r] = -s * gi + c * gj;
                }
                for (int r = 0; r < p; ++r) {
                    const double gi = G[r][i], gj = G[r][j];
                    G[r][i] = c * gi + s * gj;
                    G[r][j] = -s * gi + c * gj;
                }
            }
    }
    double emax = 0.0, emin = 1e300;
    for (int i = 0; i < p; ++i) {
        const double e = std::max(G[i][i], 0.0);
        emax = std::max(emax, e);
        emin = std::min(emin, e);
    }
    out.condition = emin > 0.0 ? std::sqrt(emax / emin) : 1e300;
    return out;
}

// Slope/intercept of y against x (used for log-log order fits).
inline std::pair<double, double> fit_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    LsqFit f = least_squares({std::vector<double>(x.size(), 1.0), x}, y);
    return {f.coef[1], f.coef[0]};
}

}  // namespace semitrace
