#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "msat/error.hpp"
#include "msat/rng.hpp"

namespace msat::nn {

/// Row-major so that one row is one sequence position.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// A learnable tensor and its gradient accumulator (same shape).
struct Param {
    Mat value;
    Mat grad;

    Param() = default;
    Param(Eigen::Index rows, Eigen::Index cols) : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
    Eigen::Index size() const { return value.size(); }

    void init_normal(Rng& rng, double stddev) {
        for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = rng.normal(stddev);
    }
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Mat& m, const char* where) {
    if (!m.allFinite()) fail(Errc::NonFiniteActivation, std::string("non-finite activation in ") + where);
}

/// Row-wise numerically stable softmax.
inline Mat softmax_rows(const Mat& z) {
    Mat p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double m = z.row(i).maxCoeff();
        p.row(i) = (z.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

inline double log_sum_exp(const Eigen::Ref<const RowVec>& z) {
    double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

}  // namespace msat::nn
