#pragma once

#include <string>
#include <vector>

#include "dlnn/error.hpp"
#include "dlnn/linalg.hpp"

namespace dlnn {

/// Ordered (t, state) points. Times increase for forward rollouts and decrease for reverse ones.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> rates;  // empty, or one per state

    std::size_t size() const noexcept { return times.size(); }
    bool empty() const noexcept { return times.empty(); }
    Index dimension() const { return states.empty() ? 0 : states.front().size(); }

    void push_back(double t, Vector state) {
        times.push_back(t);
        states.push_back(std::move(state));
    }

    const Vector& back() const { return states.back(); }

    /// States stacked as rows (size() x dimension()).
    Matrix state_matrix() const {
        Matrix m(static_cast<Index>(size()), dimension());
        for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Index>(i)) = states[i].transpose();
        return m;
    }

    void validate() const {
        require_shape(states.size() == times.size(), "trajectory: times and states differ in length");
        require_shape(rates.empty() || rates.size() == times.size(), "trajectory: rates and states differ in length");
        for (const auto& s : states) require_shape(s.size() == dimension(), "trajectory: ragged state dimension");
        if (times.size() < 2) return;
        const bool increasing = times[1] > times[0];
        for (std::size_t i = 1; i < times.size(); ++i)
            require_shape(increasing ? times[i] > times[i - 1] : times[i] < times[i - 1],
                          "trajectory: times are not strictly monotone");
    }
};

}  // namespace dlnn
