#pragma once

// Dense building blocks with explicit forward caches and analytic backward
// passes. Backward functions accumulate into Param::grad unless told not to.

#include <cmath>
#include <string>
#include <vector>

#include "msat/nn/tensor.hpp"

namespace msat::nn {

struct Linear {
    Param w;  // out × in
    Param b;  // 1 × out

    Linear() = default;
    Linear(int in, int out) : w(out, in), b(1, out) {}

    int in_dim() const { return static_cast<int>(w.value.cols()); }
    int out_dim() const { return static_cast<int>(w.value.rows()); }

    Mat forward(const Mat& x) const {
        Mat y = x * w.value.transpose();
        y.rowwise() += b.value.row(0);
        return y;
    }

    /// Returns dL/dx.
    Mat backward(const Mat& x, const Mat& dy, bool accumulate = true) {
        if (accumulate) {
            w.grad.noalias() += dy.transpose() * x;
            b.grad.row(0) += dy.colwise().sum();
        }
        return dy * w.value;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", w);
        f(prefix + ".bias", b);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".weight", w);
        f(prefix + ".bias", b);
    }
};

struct LayerNorm {
    static constexpr double kEps = 1e-5;
    Param gamma;  // 1 × d
    Param beta;   // 1 × d

    LayerNorm() = default;
    explicit LayerNorm(int d) : gamma(1, d), beta(1, d) { gamma.value.setOnes(); }

    struct Cache {
        Mat xhat;
        Eigen::VectorXd inv_std;
    };

    Mat forward(const Mat& x, Cache& c) const {
        const auto d = x.cols();
        c.xhat.resize(x.rows(), d);
        c.inv_std.resize(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double mean = x.row(i).mean();
            double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
            c.inv_std(i) = 1.0 / std::sqrt(var + kEps);
            c.xhat.row(i) = (x.row(i).array() - mean) * c.inv_std(i);
        }
        Mat y = c.xhat.array().rowwise() * gamma.value.row(0).array();
        y.rowwise() += beta.value.row(0);
        return y;
    }

    Mat backward(const Cache& c, const Mat& dy, bool accumulate = true) {
        if (accumulate) {
            gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
            beta.grad.row(0) += dy.colwise().sum();
        }
        const auto d = static_cast<double>(dy.cols());
        Mat dxhat = dy.array().rowwise() * gamma.value.row(0).array();
        Mat dx(dy.rows(), dy.cols());
        for (Eigen::Index i = 0; i < dy.rows(); ++i) {
            double m1 = dxhat.row(i).sum() / d;
            double m2 = dxhat.row(i).dot(c.xhat.row(i)) / d;
            dx.row(i) = c.inv_std(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
        }
        return dx;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gamma", gamma);
        f(prefix + ".beta", beta);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".gamma", gamma);
        f(prefix + ".beta", beta);
    }
};

// tanh approximation of GELU
inline double gelu(double u) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * u * (1.0 + std::tanh(c * (u + 0.044715 * u * u * u)));
}

inline double gelu_grad(double u) {
    constexpr double c = 0.7978845608028654;
    double t = std::tanh(c * (u + 0.044715 * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * u * u);
}

/// Masked multi-head self-attention: position i attends to positions ≤ i.
struct CausalSelfAttention {
    Linear q, k, v, o;
    int heads = 1;

    CausalSelfAttention() = default;
    CausalSelfAttention(int d, int n_heads) : q(d, d), k(d, d), v(d, d), o(d, d), heads(n_heads) {
        if (n_heads <= 0 || d % n_heads != 0) fail(Errc::ShapeMismatch, "head count must divide the model width");
    }

    struct Cache {
        Mat x, Q, K, V, O;
        std::vector<Mat> P;  // per head, T × T, zero above the diagonal
    };

    Mat forward(const Mat& x, Cache& c) const {
        const Eigen::Index T = x.rows(), d = x.cols(), dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        c.x = x;
        c.Q = q.forward(x);
        c.K = k.forward(x);
        c.V = v.forward(x);
        c.O.resize(T, d);
        c.P.assign(heads, Mat());
        for (int h = 0; h < heads; ++h) {
            Mat S = c.Q.middleCols(h * dh, dh) * c.K.middleCols(h * dh, dh).transpose() * scale;
            Mat& P = c.P[h];
            P = Mat::Zero(T, T);
            for (Eigen::Index i = 0; i < T; ++i) {
                auto row = S.row(i).head(i + 1);
                double m = row.maxCoeff();
                P.row(i).head(i + 1) = (row.array() - m).exp();
                P.row(i).head(i + 1) /= P.row(i).head(i + 1).sum();
            }
            c.O.middleCols(h * dh, dh) = P * c.V.middleCols(h * dh, dh);
        }
        return o.forward(c.O);
    }

    Mat backward(const Cache& c, const Mat& dy, bool accumulate = true) {
        const Eigen::Index T = c.x.rows(), d = c.x.cols(), dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        Mat dO = o.backward(c.O, dy, accumulate);
        Mat dQ(T, d), dK(T, d), dV(T, d);
        for (int h = 0; h < heads; ++h) {
            const Mat& P = c.P[h];
            Mat dOh = dO.middleCols(h * dh, dh);
            Mat dP = dOh * c.V.middleCols(h * dh, dh).transpose();
            dV.middleCols(h * dh, dh) = P.transpose() * dOh;
            Mat dS(T, T);
            for (Eigen::Index i = 0; i < T; ++i) {
                double dot = P.row(i).dot(dP.row(i));
                dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
            }
            dS *= scale;
            dQ.middleCols(h * dh, dh) = dS * c.K.middleCols(h * dh, dh);
            dK.middleCols(h * dh, dh) = dS.transpose() * c.Q.middleCols(h * dh, dh);
        }
        Mat dx = q.backward(c.x, dQ, accumulate);
        dx += k.backward(c.x, dK, accumulate);
        dx += v.backward(c.x, dV, accumulate);
        return dx;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        q.visit(prefix + ".query", f);
        k.visit(prefix + ".key", f);
        v.visit(prefix + ".value", f);
        o.visit(prefix + ".output", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        q.visit(prefix + ".query", f);
        k.visit(prefix + ".key", f);
        v.visit(prefix + ".value", f);
        o.visit(prefix + ".output", f);
    }
};

}  // namespace msat::nn
