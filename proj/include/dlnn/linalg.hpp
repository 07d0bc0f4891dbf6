#pragma once

#include <Eigen/Dense>

#include <string>

#include "dlnn/error.hpp"

namespace dlnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline Matrix symmetric_part(const Matrix& a) {
    require_shape(a.rows() == a.cols(), "symmetric_part: matrix must be square");
    return 0.5 * (a + a.transpose());
}

/// Index of the first row containing a NaN/Inf, or -1.
inline Index first_nonfinite_row(const Matrix& m) {
    for (Index r = 0; r < m.rows(); ++r)
        if (!m.row(r).allFinite()) return r;
    return -1;
}

inline std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace dlnn
