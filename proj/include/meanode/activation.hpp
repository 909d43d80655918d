#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace meanode {

// Scalar nonlinearities. ReLU is represented by softplus, a fixed smooth
// surrogate, so that every activation is differentiable everywhere.
enum class Activation { tanh, softplus, identity };

inline double rho(Activation act, double x) {
    switch (act) {
        case Activation::tanh: return std::tanh(x);
        case Activation::softplus:
            if (x > 30.0) return x;
            if (x < -30.0) return std::exp(x);
            return std::log1p(std::exp(x));
        case Activation::identity: return x;
    }
    return x;
}

inline double rho_prime(Activation act, double x) {
    switch (act) {
        case Activation::tanh: {
            double th = std::tanh(x);
            return 1.0 - th * th;
        }
        case Activation::softplus: return 1.0 / (1.0 + std::exp(-x));
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

inline double rho_second(Activation act, double x) {
    switch (act) {
        case Activation::tanh: {
            double th = std::tanh(x);
            return -2.0 * th * (1.0 - th * th);
        }
        case Activation::softplus: {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Activation::identity: return 0.0;
    }
    return 0.0;
}

// Odd activations have E[rho(Z)] = 0 for symmetric Z; needed by the
// tangent-model preconditions.
inline bool rho_is_odd(Activation act) {
    return act == Activation::tanh || act == Activation::identity;
}

inline std::string to_string(Activation act) {
    switch (act) {
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "softplus" || s == "relu") return Activation::softplus;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation: " + s);
}

}  // namespace meanode
