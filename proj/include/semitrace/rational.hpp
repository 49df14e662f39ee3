#pragma once

#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "semitrace/common.hpp"

namespace semitrace {

// Exact rational arithmetic for asymptotic exponents.  The exponent lattice
// {j/2 + l/k} must be generated and compared without floating error.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { normalize(); }

    void normalize() {
        if (den == 0) throw StructuralError("rational with zero denominator");
        if (den < 0) { num = -num; den = -den; }
        std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }

    friend Rational operator+(Rational a, Rational b) {
        return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
    }
    friend Rational operator-(Rational a, Rational b) {
        return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
    }
    friend Rational operator*(Rational a, Rational b) {
        return Rational(a.num * b.num, a.den * b.den);
    }
    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator<(const Rational& a, const Rational& b) {
        return a.num * b.den < b.num * a.den;
    }
};

// Leading power of the smoothed spectral sum at a degree-k minimum in n
// dimensions: -n + n/2 + n/k = n(2-k)/(2k).
inline Rational leading_exponent(int n, int k) {
    return Rational(static_cast<std::int64_t>(n) * (2 - k), 2LL * k);
}

// Smallest `count` distinct positive exponents of the correction lattice
// {j/2 + l/k : j,l >= 0} \ {0}, ascending.
inline std::vector<Rational> correction_exponents(int k, int count) {
    std::set<Rational> lattice;
    // j/2 + l/k <= count covers far more than `count` smallest entries.
    for (int j = 0; j <= 2 * count + 2; ++j) {
        for (int l = 0; l <= k * (count + 1); ++l) {
            if (j == 0 && l == 0) continue;
            Rational e = Rational(j, 2) + Rational(l, k);
            if (e < Rational(count + 1)) lattice.insert(e);
        }
    }
    std::vector<Rational> out;
    for (const auto& e : lattice) {
        out.push_back(e);
        if (static_cast<int>(out.size()) == count) break;
    }
    return out;
}

}  // namespace semitrace
