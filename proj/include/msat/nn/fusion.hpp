#pragma once

// Token-wise cross-scale fusion. For one token type, three per-scale token
// embeddings (note, bar, track) are merged as a convex combination whose
// weights are a softmax over three scores.
//   global: scores are three learned scalars per token type, shared by all events
//   local:  score_i = W_i · h_i with a learned 3 × N matrix per token type

#include <array>
#include <string>

#include "msat/nn/tensor.hpp"
#include "msat/vocab.hpp"

namespace msat::nn {

enum class FusionMode { none, global, local };

constexpr std::string_view fusion_name(FusionMode m) {
    switch (m) {
        case FusionMode::none: return "none";
        case FusionMode::global: return "global";
        case FusionMode::local: return "local";
    }
    return "none";
}

inline FusionMode parse_fusion(std::string_view s) {
    for (FusionMode m : {FusionMode::none, FusionMode::global, FusionMode::local})
        if (fusion_name(m) == s) return m;
    fail(Errc::Config, "unknown fusion mode '" + std::string(s) + "'");
}

using ScaleTriple = std::array<Mat, 3>;  // note, bar, track; each T × N

struct FusionCache {
    Mat alpha;  // T × 3
};

namespace detail {

inline Eigen::RowVector3d softmax3(const Eigen::RowVector3d& s) {
    Eigen::RowVector3d e = (s.array() - s.maxCoeff()).exp();
    return e / e.sum();
}

inline Mat combine(const ScaleTriple& h, const Mat& alpha) {
    Mat out = h[0].array().colwise() * alpha.col(0).array();
    for (int i = 1; i < 3; ++i) out.array() += h[i].array().colwise() * alpha.col(i).array();
    return out;
}

// dL/dα for each position: dα_ti = dy_t · h_i,t
inline Mat alpha_grad(const ScaleTriple& h, const Mat& dy) {
    Mat da(dy.rows(), 3);
    for (int i = 0; i < 3; ++i) da.col(i) = (dy.array() * h[i].array()).rowwise().sum();
    return da;
}

// Softmax Jacobian applied row-wise: ds = α ⊙ (dα − α·dα)
inline Mat score_grad(const Mat& alpha, const Mat& da) {
    Mat ds(alpha.rows(), 3);
    for (Eigen::Index t = 0; t < alpha.rows(); ++t) {
        double dot = alpha.row(t).dot(da.row(t));
        ds.row(t) = alpha.row(t).array() * (da.row(t).array() - dot);
    }
    return ds;
}

}  // namespace detail

struct GlobalFusion {
    Param omega{kNumFields, 3};

    Eigen::RowVector3d alpha(Field f) const { return detail::softmax3(omega.value.row(static_cast<int>(f))); }

    Mat forward(Field f, const ScaleTriple& h, FusionCache& c) const {
        c.alpha = alpha(f).replicate(h[0].rows(), 1);
        return detail::combine(h, c.alpha);
    }

    ScaleTriple backward(Field f, const ScaleTriple& h, const FusionCache& c, const Mat& dy, bool accumulate = true) {
        ScaleTriple dh;
        for (int i = 0; i < 3; ++i) dh[i] = dy * c.alpha(0, i);
        if (accumulate && dy.rows() > 0) {
            Eigen::RowVector3d da = detail::alpha_grad(h, dy).colwise().sum();
            Eigen::RowVector3d a = alpha(f);
            omega.grad.row(static_cast<int>(f)) += (a.array() * (da.array() - a.dot(da))).matrix();
        }
        return dh;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".omega", omega);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".omega", omega);
    }
};

struct LocalFusion {
    std::array<Param, kNumFields> w;  // per token type, 3 × N

    LocalFusion() = default;
    explicit LocalFusion(int token_dim) {
        for (auto& p : w) p = Param(3, token_dim);
    }

    Mat forward(Field f, const ScaleTriple& h, FusionCache& c) const {
        const Mat& W = w[static_cast<int>(f)].value;
        Mat scores(h[0].rows(), 3);
        for (int i = 0; i < 3; ++i) scores.col(i) = h[i] * W.row(i).transpose();
        c.alpha.resize(scores.rows(), 3);
        for (Eigen::Index t = 0; t < scores.rows(); ++t) c.alpha.row(t) = detail::softmax3(scores.row(t));
        return detail::combine(h, c.alpha);
    }

    ScaleTriple backward(Field f, const ScaleTriple& h, const FusionCache& c, const Mat& dy, bool accumulate = true) {
        Param& W = w[static_cast<int>(f)];
        Mat ds = detail::score_grad(c.alpha, detail::alpha_grad(h, dy));
        ScaleTriple dh;
        for (int i = 0; i < 3; ++i) {
            dh[i] = dy.array().colwise() * c.alpha.col(i).array();
            dh[i].noalias() += ds.col(i) * W.value.row(i);
            if (accumulate) W.grad.row(i).noalias() += ds.col(i).transpose() * h[i];
        }
        return dh;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (Field fl : kFields) f(prefix + ".w." + std::string(field_name(fl)), w[static_cast<int>(fl)]);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        for (Field fl : kFields) f(prefix + ".w." + std::string(field_name(fl)), w[static_cast<int>(fl)]);
    }
};

}  // namespace msat::nn
