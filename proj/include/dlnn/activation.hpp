#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "dlnn/error.hpp"

namespace dlnn {

/// Hidden-layer nonlinearity. `tanh` is the default for learned networks;
/// `identity` and `quadratic` (z^2/2) exist to build exact affine and quadratic stubs.
enum class Activation { tanh, identity, quadratic };

/// Highest derivative order `activation_derivative` supports.
inline constexpr int kMaxActivationOrder = 4;

/// k-th derivative of the activation at z, k in [0, kMaxActivationOrder].
inline double activation_derivative(Activation act, int order, double z) {
    switch (act) {
    case Activation::tanh: {
        const double t = std::tanh(z);
        const double s = 1.0 - t * t;  // sech^2
        switch (order) {
        case 0: return t;
        case 1: return s;
        case 2: return -2.0 * t * s;
        case 3: return s * (6.0 * t * t - 2.0);
        case 4: return 8.0 * t * s * (2.0 - 3.0 * t * t);
        default: break;
        }
        break;
    }
    case Activation::identity:
        switch (order) {
        case 0: return z;
        case 1: return 1.0;
        default: return 0.0;
        }
    case Activation::quadratic:
        switch (order) {
        case 0: return 0.5 * z * z;
        case 1: return z;
        case 2: return 1.0;
        default: return 0.0;
        }
    }
    throw ConfigError("activation derivative order out of range: " + std::to_string(order));
}

inline std::string_view to_string(Activation act) {
    switch (act) {
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    case Activation::quadratic: return "quadratic";
    }
    return "?";
}

inline Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    if (name == "quadratic") return Activation::quadratic;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

/// Learned networks need a nonvanishing, smooth second derivative.
inline bool is_twice_differentiable_nonlinear(Activation act) {
    return act == Activation::tanh || act == Activation::quadratic;
}

}  // namespace dlnn
