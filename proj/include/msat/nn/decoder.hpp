#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msat/nn/layers.hpp"
#include "msat/representation.hpp"

namespace msat::nn {

struct DecoderConfig {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;

    bool operator==(const DecoderConfig&) const = default;
};

/// Parameter-free sinusoidal encoding: sin on even, cos on odd coordinates.
inline Mat positional_encoding(Eigen::Index length, Eigen::Index d) {
    Mat pe(length, d);
    for (Eigen::Index i = 0; i < length; ++i)
        for (Eigen::Index k = 0; k < d; ++k) {
            double rate = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(d));
            pe(i, k) = (k % 2 == 0) ? std::sin(static_cast<double>(i) * rate) : std::cos(static_cast<double>(i) * rate);
        }
    return pe;
}

/// Token-wise embedding: per event the sum of its six field embeddings,
/// plus the positional encoding of its index.
struct Embedding {
    std::array<Param, kNumFields> tables;

    Embedding() = default;
    explicit Embedding(int d) {
        for (Field f : kFields) tables[static_cast<int>(f)] = Param(Vocabulary::size(f), d);
    }

    Eigen::Index width() const { return tables[0].value.cols(); }

    Mat forward(std::span<const Event> events) const {
        Mat x = positional_encoding(static_cast<Eigen::Index>(events.size()), width());
        for (std::size_t i = 0; i < events.size(); ++i)
            for (int f = 0; f < kNumFields; ++f) {
                int code = events[i].codes[f];
                if (code < 0 || code >= tables[f].value.rows())
                    fail(Errc::CodeOutOfRange, std::string(field_name(static_cast<Field>(f))) + " code " +
                                                   std::to_string(code) + " at position " + std::to_string(i));
                x.row(static_cast<Eigen::Index>(i)) += tables[f].value.row(code);
            }
        return x;
    }

    void backward(std::span<const Event> events, const Mat& dx) {
        for (std::size_t i = 0; i < events.size(); ++i)
            for (int f = 0; f < kNumFields; ++f)
                tables[f].grad.row(events[i].codes[f]) += dx.row(static_cast<Eigen::Index>(i));
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (Field fl : kFields) f(prefix + "." + std::string(field_name(fl)), tables[static_cast<int>(fl)]);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        for (Field fl : kFields) f(prefix + "." + std::string(field_name(fl)), tables[static_cast<int>(fl)]);
    }
};

/// Pre-norm residual block: x + Attn(LN(x)), then + FFN(LN(.)).
struct DecoderBlock {
    LayerNorm ln1;
    CausalSelfAttention attn;
    LayerNorm ln2;
    Linear fc1, fc2;

    DecoderBlock() = default;
    explicit DecoderBlock(const DecoderConfig& c)
        : ln1(c.d_model), attn(c.d_model, c.n_heads), ln2(c.d_model), fc1(c.d_model, c.d_ff), fc2(c.d_ff, c.d_model) {}

    struct Cache {
        LayerNorm::Cache ln1, ln2;
        CausalSelfAttention::Cache attn;
        Mat a, x2, b, u, g;
    };

    Mat forward(const Mat& x, Cache& c) const {
        c.a = ln1.forward(x, c.ln1);
        c.x2 = x + attn.forward(c.a, c.attn);
        c.b = ln2.forward(c.x2, c.ln2);
        c.u = fc1.forward(c.b);
        c.g = c.u.unaryExpr([](double v) { return gelu(v); });
        return c.x2 + fc2.forward(c.g);
    }

    Mat backward(const Cache& c, const Mat& dy, bool accumulate = true) {
        Mat dg = fc2.backward(c.g, dy, accumulate);
        Mat du = dg.array() * c.u.unaryExpr([](double v) { return gelu_grad(v); }).array();
        Mat dx2 = dy + ln2.backward(c.ln2, fc1.backward(c.b, du, accumulate), accumulate);
        return dx2 + ln1.backward(c.ln1, attn.backward(c.attn, dx2, accumulate), accumulate);
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        ln1.visit(prefix + ".ln1", f);
        attn.visit(prefix + ".attn", f);
        ln2.visit(prefix + ".ln2", f);
        fc1.visit(prefix + ".ff1", f);
        fc2.visit(prefix + ".ff2", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        ln1.visit(prefix + ".ln1", f);
        attn.visit(prefix + ".attn", f);
        ln2.visit(prefix + ".ln2", f);
        fc1.visit(prefix + ".ff1", f);
        fc2.visit(prefix + ".ff2", f);
    }
};

/// One per-scale Transformer decoder: embedding, L blocks, final LayerNorm.
struct Decoder {
    DecoderConfig config;
    Embedding embedding;
    std::vector<DecoderBlock> blocks;
    LayerNorm ln_final;

    Decoder() = default;
    explicit Decoder(const DecoderConfig& c) : config(c), embedding(c.d_model), ln_final(c.d_model) {
        if (c.d_model <= 0 || c.n_layers < 0 || c.d_ff <= 0) fail(Errc::ShapeMismatch, "invalid decoder dimensions");
        for (int l = 0; l < c.n_layers; ++l) blocks.emplace_back(c);
    }

    struct Cache {
        std::vector<DecoderBlock::Cache> blocks;
        LayerNorm::Cache ln_final;
    };

    /// Blocks + final norm over an already embedded sequence.
    Mat forward_hidden(const Mat& x, Cache& c) const {
        c.blocks.resize(blocks.size());
        Mat h = x;
        for (std::size_t l = 0; l < blocks.size(); ++l) h = blocks[l].forward(h, c.blocks[l]);
        Mat out = ln_final.forward(h, c.ln_final);
        require_finite(out, "decoder output");
        return out;
    }

    Mat backward_hidden(const Cache& c, const Mat& dy, bool accumulate = true) {
        Mat d = ln_final.backward(c.ln_final, dy, accumulate);
        for (std::size_t l = blocks.size(); l-- > 0;) d = blocks[l].backward(c.blocks[l], d, accumulate);
        return d;
    }

    Mat forward(std::span<const Event> events, Cache& c) const { return forward_hidden(embedding.forward(events), c); }

    void backward(std::span<const Event> events, const Cache& c, const Mat& dy) {
        embedding.backward(events, backward_hidden(c, dy));
    }

    void init(Rng& rng) {
        for (auto& t : embedding.tables) t.init_normal(rng, 0.5);
        const double residual_std = 0.02 / std::sqrt(2.0 * std::max<std::size_t>(1, blocks.size()));
        for (auto& b : blocks) {
            for (Linear* l : {&b.attn.q, &b.attn.k, &b.attn.v, &b.fc1}) l->w.init_normal(rng, 0.02);
            b.attn.o.w.init_normal(rng, residual_std);
            b.fc2.w.init_normal(rng, residual_std);
        }
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        embedding.visit(prefix + ".embed", f);
        for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].visit(prefix + ".block" + std::to_string(l), f);
        ln_final.visit(prefix + ".ln_final", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        embedding.visit(prefix + ".embed", f);
        for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].visit(prefix + ".block" + std::to_string(l), f);
        ln_final.visit(prefix + ".ln_final", f);
    }
};

}  // namespace msat::nn
