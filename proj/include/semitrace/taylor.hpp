#pragma once

#include <vector>

#include "semitrace/common.hpp"

namespace semitrace {

// Truncated Taylor series arithmetic in one variable.  Coefficient c[j] is
// the j-th Taylor coefficient (derivative / j!).  Used to get exact
// derivatives of bump profiles like exp(-1/(1-t^2)) at arbitrary points,
// which finite differences cannot deliver at high order.
struct Jet {
    std::vector<double> c;

    explicit Jet(int order) : c(order + 1, 0.0) {}
    static Jet constant(double v, int order) {
        Jet j(order);
        j.c[0] = v;
        return j;
    }
    static Jet variable(double v, int order) {
        Jet j(order);
        j.c[0] = v;
        if (order >= 1) j.c[1] = 1.0;
        return j;
    }
    int order() const { return static_cast<int>(c.size()) - 1; }

    double derivative(int m) const {
        double f = 1.0;
        for (int i = 2; i <= m; ++i) f *= i;
        return c[m] * f;
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        Jet r(a.order());
        for (int i = 0; i <= r.order(); ++i) r.c[i] = a.c[i] + b.c[i];
        return r;
    }
    friend Jet operator-(const Jet& a, const Jet& b) {
        Jet r(a.order());
        for (int i = 0; i <= r.order(); ++i) r.c[i] = a.c[i] - b.c[i];
        return r;
    }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r(a.order());
        for (int i = 0; i <= r.order(); ++i)
            for (int j = 0; i + j <= r.order(); ++j) r.c[i + j] += a.c[i] * b.c[j];
        return r;
    }
    friend Jet operator*(double s, const Jet& a) {
        Jet r(a.order());
        for (int i = 0; i <= r.order(); ++i) r.c[i] = s * a.c[i];
        return r;
    }
    friend Jet operator+(const Jet& a, double s) {
        Jet r = a;
        r.c[0] += s;
        return r;
    }
    friend Jet operator-(double s, const Jet& a) {
        Jet r = -1.0 * a;
        r.c[0] += s;
        return r;
    }
};

// 1/a with a.c[0] != 0, by the standard recurrence.
inline Jet reciprocal(const Jet& a) {
    if (a.c[0] == 0.0) throw StructuralError("jet reciprocal at a zero");
    Jet r(a.order());
    r.c[0] = 1.0 / a.c[0];
    for (int i = 1; i <= r.order(); ++i) {
        double s = 0.0;
        for (int j = 1; j <= i; ++j) s += a.c[j] * r.c[i - j];
        r.c[i] = -s / a.c[0];
    }
    return r;
}

// exp(a): r' = a' r gives r[i] = (1/i) sum_j j*a[j] r[i-j].
inline Jet exp(const Jet& a) {
    Jet r(a.order());
    r.c[0] = std::exp(a.c[0]);
    for (int i = 1; i <= r.order(); ++i) {
        double s = 0.0;
        for (int j = 1; j <= i; ++j) s += j * a.c[j] * r.c[i - j];
        r.c[i] = s / i;
    }
    return r;
}

}  // namespace semitrace
