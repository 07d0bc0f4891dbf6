#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dlnn/activation.hpp"
#include "dlnn/error.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/tape.hpp"

namespace dlnn {

/// Fully connected network shape. `layer_sizes` = {input, hidden..., output}.
/// Every hidden layer applies `activation`; the output layer is affine.
struct Architecture {
    std::vector<int> layer_sizes;
    Activation activation = Activation::tanh;

    int input_width() const { return layer_sizes.front(); }
    int output_width() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return layer_sizes.size() - 1; }

    void validate() const {
        require_config(layer_sizes.size() >= 2, "architecture needs at least an input and an output layer");
        for (int w : layer_sizes) require_config(w > 0, "layer widths must be positive");
    }

    bool operator==(const Architecture&) const = default;
};

/// Weights and biases of a fully connected network. weights[l] is
/// (layer_sizes[l+1] x layer_sizes[l]); biases[l] has layer_sizes[l+1] entries.
struct NetworkParams {
    Architecture arch;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    int input_width() const { return arch.input_width(); }
    int output_width() const { return arch.output_width(); }

    void validate() const {
        arch.validate();
        require_shape(weights.size() == arch.num_layers() && biases.size() == arch.num_layers(),
                      "parameter count does not match architecture");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            require_shape(weights[l].rows() == arch.layer_sizes[l + 1] && weights[l].cols() == arch.layer_sizes[l],
                          "weight " + std::to_string(l) + " has shape " + shape_string(weights[l]));
            require_shape(biases[l].size() == arch.layer_sizes[l + 1], "bias " + std::to_string(l) + " has wrong length");
        }
    }

    Index parameter_count() const {
        Index n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }
};

/// All-zero parameters with the given architecture.
inline NetworkParams zero_network(const Architecture& arch) {
    arch.validate();
    NetworkParams p;
    p.arch = arch;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        p.weights.push_back(Matrix::Zero(arch.layer_sizes[l + 1], arch.layer_sizes[l]));
        p.biases.push_back(Vector::Zero(arch.layer_sizes[l + 1]));
    }
    return p;
}

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline NetworkParams init_network(const Architecture& arch, std::uint64_t seed) {
    NetworkParams p = zero_network(arch);
    std::mt19937_64 rng(seed);
    for (auto& w : p.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Index r = 0; r < w.rows(); ++r)
            for (Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
    return p;
}

/// Layer order, each layer's weight row-major followed by its bias.
inline Vector flatten(const NetworkParams& p) {
    Vector flat(p.parameter_count());
    Index k = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const Matrix& w = p.weights[l];
        for (Index r = 0; r < w.rows(); ++r)
            for (Index c = 0; c < w.cols(); ++c) flat[k++] = w(r, c);
        flat.segment(k, p.biases[l].size()) = p.biases[l];
        k += p.biases[l].size();
    }
    return flat;
}

inline NetworkParams unflatten(const Architecture& arch, const Vector& flat) {
    NetworkParams p = zero_network(arch);
    require_shape(flat.size() == p.parameter_count(),
                  "flat parameter vector has " + std::to_string(flat.size()) + " entries, architecture needs " +
                      std::to_string(p.parameter_count()));
    Index k = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Matrix& w = p.weights[l];
        for (Index r = 0; r < w.rows(); ++r)
            for (Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
        p.biases[l] = flat.segment(k, p.biases[l].size());
        k += p.biases[l].size();
    }
    return p;
}

// ---------------------------------------------------------------------------
// Batched passes, generic over Matrix / Var operands. Samples are rows.
// ---------------------------------------------------------------------------

/// Network weights as operands of type T; biases stored as 1 x n rows.
template <class T>
struct NetView {
    std::vector<T> weights;
    std::vector<T> biases;
    Activation activation = Activation::tanh;

    std::size_t num_layers() const { return weights.size(); }
};

inline NetView<Matrix> view(const NetworkParams& p) {
    NetView<Matrix> v;
    v.activation = p.arch.activation;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        v.weights.push_back(p.weights[l]);
        v.biases.push_back(p.biases[l].transpose());
    }
    return v;
}

/// Parameters as tape leaves, in the same order as `flatten`.
inline NetView<Var> record_params(Tape& tape, const NetworkParams& p) {
    NetView<Var> v;
    v.activation = p.arch.activation;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        v.weights.push_back(tape.leaf(p.weights[l]));
        v.biases.push_back(tape.leaf(Matrix(p.biases[l].transpose())));
    }
    return v;
}

/// Pre-activations of every layer plus the network output.
/// With `derivatives`, the first and second activation derivatives of every
/// hidden layer are kept for the gradient and HVP sweeps.
template <class T>
struct ForwardTrace {
    std::vector<T> pre;    // pre[l]: layer l+1 pre-activation, B x n_{l+1}
    std::vector<T> post;   // post[l]: activation of hidden layer l+1
    std::vector<T> d1;     // sigma'(pre[l]) for hidden layers
    std::vector<T> d2;     // sigma''(pre[l]) for hidden layers
    T output;              // B x n_out
};

template <class T>
ForwardTrace<T> forward_trace(const NetView<T>& net, const T& input, bool derivatives = true) {
    ForwardTrace<T> tr;
    T a = input;
    const std::size_t L = net.num_layers();
    for (std::size_t l = 0; l < L; ++l) {
        T z = add_row(matmul_nt(a, net.weights[l]), net.biases[l]);
        tr.pre.push_back(z);
        if (l + 1 < L) {
            a = activate(z, net.activation, 0);
            tr.post.push_back(a);
            if (derivatives) {
                tr.d1.push_back(activate(z, net.activation, 1));
                tr.d2.push_back(activate(z, net.activation, 2));
            }
        } else {
            tr.output = z;
        }
    }
    return tr;
}

/// Reverse sweep of a scalar-output network: d(output)/d(hidden activation) per layer.
/// grad_post[l] pairs with trace.post[l]; `input` holds d(output)/d(input).
template <class T>
struct GradientTrace {
    std::vector<T> grad_post;
    T input;
};

template <class T>
GradientTrace<T> gradient_trace(const NetView<T>& net, const ForwardTrace<T>& tr) {
    const std::size_t L = net.num_layers();
    const Index batch = value_of(tr.output).rows();
    GradientTrace<T> g;
    g.grad_post.resize(L - 1, tr.output);
    T grad_pre = lift(tr.output, Matrix::Ones(batch, 1));
    for (std::size_t l = L; l-- > 0;) {
        T grad_in = matmul(grad_pre, net.weights[l]);
        if (l == 0) {
            g.input = grad_in;
        } else {
            g.grad_post[l - 1] = grad_in;
            grad_pre = cmul(grad_in, tr.d1[l - 1]);
        }
    }
    return g;
}

/// Directional derivative of the input gradient along `direction` (forward over reverse).
/// Returns H * direction row-wise, where H is the input Hessian of the scalar output.
template <class T>
T hvp_trace(const NetView<T>& net, const ForwardTrace<T>& tr, const GradientTrace<T>& g, const T& direction) {
    const std::size_t L = net.num_layers();
    if (L == 1) return lift(direction, Matrix::Zero(value_of(direction).rows(), value_of(direction).cols()));

    // Tangents of hidden pre-activations.
    std::vector<T> dpre;
    dpre.reserve(L - 1);
    T da = direction;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        T dz = matmul_nt(da, net.weights[l]);
        dpre.push_back(dz);
        if (l + 2 < L) da = cmul(tr.d1[l], dz);
    }

    // Tangent of the reverse sweep. The top hidden layer's incoming adjoint is
    // constant in the input, so its tangent starts from the curvature term only.
    T dgrad_pre = cmul(g.grad_post[L - 2], cmul(tr.d2[L - 2], dpre[L - 2]));
    for (std::size_t l = L - 1; l-- > 0;) {
        T dgrad_in = matmul(dgrad_pre, net.weights[l]);
        if (l == 0) return dgrad_in;
        dgrad_pre = add(cmul(dgrad_in, tr.d1[l - 1]), cmul(g.grad_post[l - 1], cmul(tr.d2[l - 1], dpre[l - 1])));
    }
    return direction;  // unreachable
}

}  // namespace dlnn
