#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "fatten/errors.hpp"
#include "fatten/rng.hpp"

namespace fatten {

// Row-major double matrix; the carrier for all batches, parameters, and
// gradients. Row-major keeps serialization and per-row batch semantics
// straightforward.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline std::string shape_str(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols,
                          const std::string& what) {
    if (m.rows() != rows || m.cols() != cols)
        throw DimensionError(what + ": expected " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", got " + shape_str(m));
}

inline void require_cols(const Mat& m, Eigen::Index cols, const std::string& what) {
    if (m.cols() != cols)
        throw DimensionError(what + ": expected " + std::to_string(cols) +
                             " columns, got " + shape_str(m));
}

inline void require_same_shape(const Mat& a, const Mat& b, const std::string& what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(what + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " differ");
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Mat& m, const std::string& what) {
    if (!m.allFinite())
        throw NumericsError(what + ": non-finite values in " + shape_str(m) + " matrix");
}

inline Mat random_uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.uniform(lo, hi);
    return m;
}

inline Mat random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = stddev * rng.normal();
    return m;
}

} // namespace fatten
