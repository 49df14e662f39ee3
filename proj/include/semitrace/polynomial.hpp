#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "semitrace/common.hpp"

namespace semitrace {

// Real polynomial in up to three variables, stored as multi-index -> coefficient.
// All potentials in this project are polynomials, so germ manipulations
// (homogeneous split, gradients, Hessians) are exact.
class Polynomial {
public:
    using Index = std::array<int, 3>;

    Polynomial() = default;
    explicit Polynomial(int dims) : dims_(dims) {
        if (dims < 1 || dims > 3) throw StructuralError("polynomial dimension must be 1..3");
    }

    int dims() const { return dims_; }
    bool empty() const { return terms_.empty(); }

    void add_term(const Index& idx, double coeff) {
        for (int i = dims_; i < 3; ++i)
            if (idx[i] != 0) throw StructuralError("multi-index uses inactive dimension");
        for (int i = 0; i < 3; ++i)
            if (idx[i] < 0) throw StructuralError("negative exponent in multi-index");
        auto it = terms_.find(idx);
        if (it == terms_.end()) {
            if (coeff != 0.0) terms_[idx] = coeff;
        } else {
            it->second += coeff;
            if (it->second == 0.0) terms_.erase(it);
        }
    }

    double eval(const Vec3& x) const {
        double sum = 0.0;
        for (const auto& [idx, c] : terms_) {
            double t = c;
            for (int d = 0; d < dims_; ++d)
                for (int p = 0; p < idx[d]; ++p) t *= x[d];
            sum += t;
        }
        return sum;
    }

    Polynomial derivative(int dim) const {
        Polynomial r(dims_);
        for (const auto& [idx, c] : terms_) {
            if (idx[dim] == 0) continue;
            Index d = idx;
            d[dim] -= 1;
            r.add_term(d, c * idx[dim]);
        }
        return r;
    }

    std::vector<Polynomial> gradient() const {
        std::vector<Polynomial> g;
        for (int d = 0; d < dims_; ++d) g.push_back(derivative(d));
        return g;
    }

    Vec3 eval_gradient(const Vec3& x) const {
        Vec3 g{0.0, 0.0, 0.0};
        for (int d = 0; d < dims_; ++d) g[d] = derivative(d).eval(x);
        return g;
    }

    int degree() const {
        int deg = -1;
        for (const auto& [idx, c] : terms_)
            deg = std::max(deg, idx[0] + idx[1] + idx[2]);
        return deg;  // -1 for the zero polynomial
    }

    int lowest_degree() const {
        int deg = -1;
        for (const auto& [idx, c] : terms_) {
            int d = idx[0] + idx[1] + idx[2];
            if (deg < 0 || d < deg) deg = d;
        }
        return deg;
    }

    std::set<int> degrees_present() const {
        std::set<int> out;
        for (const auto& [idx, c] : terms_) out.insert(idx[0] + idx[1] + idx[2]);
        return out;
    }

    Polynomial homogeneous_part(int d) const {
        Polynomial r(dims_);
        for (const auto& [idx, c] : terms_)
            if (idx[0] + idx[1] + idx[2] == d) r.add_term(idx, c);
        return r;
    }

    Polynomial scaled(double s) const {
        Polynomial r(dims_);
        for (const auto& [idx, c] : terms_) r.add_term(idx, s * c);
        return r;
    }

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
        if (a.dims_ != b.dims_) throw StructuralError("polynomial dimension mismatch");
        Polynomial r = a;
        for (const auto& [idx, c] : b.terms_) r.add_term(idx, c);
        return r;
    }

    const std::map<Index, double>& terms() const { return terms_; }

    std::string str(const char* const* names = nullptr) const {
        static const char* def[3] = {"x1", "x2", "x3"};
        if (!names) names = def;
        if (terms_.empty()) return "0";
        std::string s;
        for (const auto& [idx, c] : terms_) {
            if (!s.empty()) s += " + ";
            s += fmt_g(c, 12);
            for (int d = 0; d < dims_; ++d) {
                if (idx[d] == 0) continue;
                s += "*";
                s += names[d];
                if (idx[d] > 1) s += "^" + std::to_string(idx[d]);
            }
        }
        return s;
    }

    // Convenience for 1-d monomial construction: c * x^p.
    static Polynomial monomial_1d(int p, double c) {
        Polynomial r(1);
        r.add_term({p, 0, 0}, c);
        return r;
    }

private:
    int dims_ = 1;
    std::map<Index, double> terms_;
};

}  // namespace semitrace
