#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "meanode/common.hpp"

namespace meanode {

// Dense D x T array of layer activations. T = 1 for plain vector states,
// T > 1 for token families (one column per token, column-major).
struct State {
    int d = 0;
    int t = 1;
    std::vector<double> a;

    State() = default;
    State(int d_, int t_) : d(d_), t(t_), a(static_cast<std::size_t>(d_) * t_, 0.0) {
        if (d_ < 1 || t_ < 1) throw std::invalid_argument("State: D and T must be >= 1");
    }

    std::size_t size() const { return a.size(); }
    double* token(int tok) { return a.data() + static_cast<std::size_t>(tok) * d; }
    const double* token(int tok) const { return a.data() + static_cast<std::size_t>(tok) * d; }

    double& operator[](std::size_t i) { return a[i]; }
    double operator[](std::size_t i) const { return a[i]; }

    bool same_shape(const State& o) const { return d == o.d && t == o.t; }
    bool finite() const { return all_finite(a.data(), a.size()); }

    void fill(double v) {
        for (auto& x : a) x = v;
    }
};

inline State operator-(const State& x, const State& y) {
    if (!x.same_shape(y)) throw std::invalid_argument("State subtraction: shape mismatch");
    State out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] -= y.a[i];
    return out;
}

// out += c * x
inline void axpy(double c, const State& x, State& out) {
    if (!x.same_shape(out)) throw std::invalid_argument("axpy: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += c * x.a[i];
}

inline double dot(const double* x, const double* y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

// RMS norm: D^{-1/2} ||x||_2 per token, averaged over tokens. The typical
// entry size of a dense vector; all error metrics below are expressed in it.
inline double rms_norm(const State& x) {
    if (!x.finite()) throw std::domain_error("rms_norm: non-finite state");
    double acc = 0.0;
    for (int tok = 0; tok < x.t; ++tok) {
        const double* col = x.token(tok);
        acc += std::sqrt(dot(col, col, x.d) / x.d);
    }
    return acc / x.t;
}

inline double rms_distance(const State& x, const State& y) { return rms_norm(x - y); }

// RMS over a flat coordinate array (pooled, not per-token).
inline double rms_of(const double* p, std::size_t n) {
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i] * p[i];
    return std::sqrt(s / static_cast<double>(n));
}

inline double l2_of(const double* p, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i] * p[i];
    return std::sqrt(s);
}

}  // namespace meanode
