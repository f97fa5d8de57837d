#pragma once

// Single-scale decoder models and the multi-scale attentive model.
//
// Both share the output stage: decoder hidden states (width d) are split by
// one affine map into six token embeddings (width N each), one per event
// field, and six heads map token embeddings to per-field logits. The
// multi-scale model runs a decoder per scale, realigns the note and track
// outputs into target (bar) order, decomposes all three, fuses each token
// type across scales, and feeds the fused embeddings to the heads.

#include <array>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "msat/nn/decoder.hpp"
#include "msat/nn/fusion.hpp"
#include "msat/representation.hpp"

namespace msat::nn {

struct ModelConfig {
    DecoderConfig decoder;
    int token_dim = 64;
    int max_len = 1024;

    bool operator==(const ModelConfig&) const = default;
};

enum class ModelKind { single_scale, msat };

inline const std::string& decoder_group(Scale s) {
    static const std::array<std::string, 3> names = {"decoder.note", "decoder.bar", "decoder.track"};
    return names[static_cast<int>(s)];
}
inline const std::string kDecomposeGroup = "decompose";
inline const std::string kFusionGroup = "fusion";
inline const std::string kHeadsGroup = "heads";

/// Applies the decomposition map and splits its output into the six
/// per-field token embedding sequences (T × N each).
inline std::array<Mat, kNumFields> decompose_tokens(const Linear& decompose, const Mat& h) {
    Mat z = decompose.forward(h);
    const auto n = z.cols() / kNumFields;
    std::array<Mat, kNumFields> out;
    for (int f = 0; f < kNumFields; ++f) out[f] = z.middleCols(f * n, n);
    return out;
}

/// One teacher-forced training sequence. `inputs[s]` holds the input event
/// set in scale s's order (T events); `gather[s][j]` is the position in
/// inputs[s] of the event at target position j; `targets[j]` is the event
/// that follows target position j.
struct Example {
    std::array<std::vector<Event>, 3> inputs;
    std::array<std::vector<int>, 3> gather;
    std::vector<Event> targets;
    Scale target = Scale::bar;

    std::size_t length() const { return targets.size(); }
};

struct LossReport {
    double total = 0.0;
    std::array<double, kNumFields> per_field{};
    std::size_t positions = 0;
};

class Model {
public:
    ModelConfig config;
    ModelKind kind = ModelKind::single_scale;
    Scale target = Scale::bar;
    FusionMode fusion = FusionMode::none;

    std::array<std::optional<Decoder>, 3> decoders;
    Linear decompose;
    GlobalFusion global_fusion;
    LocalFusion local_fusion;
    std::array<Linear, kNumFields> heads;
    std::set<std::string> frozen;

    Model() = default;

    static Model single_scale(const ModelConfig& cfg, Scale scale, Rng& rng) {
        Model m(cfg, ModelKind::single_scale, scale, FusionMode::none);
        m.decoders[static_cast<int>(scale)] = Decoder(cfg.decoder);
        m.init(rng);
        return m;
    }

    /// Fresh multi-scale model; note and track decoders start frozen.
    static Model msat(const ModelConfig& cfg, FusionMode fusion, Rng& rng) {
        if (fusion == FusionMode::none) fail(Errc::Config, "multi-scale model needs global or local fusion");
        Model m(cfg, ModelKind::msat, Scale::bar, fusion);
        for (Scale s : kScales) m.decoders[static_cast<int>(s)] = Decoder(cfg.decoder);
        m.init(rng);
        m.frozen = {decoder_group(Scale::note), decoder_group(Scale::track)};
        return m;
    }

    /// Empty model with the right shapes, used when loading checkpoints.
    static Model skeleton(const ModelConfig& cfg, ModelKind kind, Scale target, FusionMode fusion) {
        Model m(cfg, kind, target, fusion);
        for (Scale s : kScales)
            if (kind == ModelKind::msat || s == target) m.decoders[static_cast<int>(s)] = Decoder(cfg.decoder);
        return m;
    }

    bool active(Scale s) const { return decoders[static_cast<int>(s)].has_value(); }
    Decoder& decoder(Scale s) { return *decoders[static_cast<int>(s)]; }
    const Decoder& decoder(Scale s) const { return *decoders[static_cast<int>(s)]; }
    bool is_frozen(const std::string& group) const { return frozen.count(group) > 0; }

    std::vector<std::string> groups() const {
        std::vector<std::string> g;
        for (Scale s : kScales)
            if (active(s)) g.push_back(decoder_group(s));
        g.push_back(kDecomposeGroup);
        if (kind == ModelKind::msat) g.push_back(kFusionGroup);
        g.push_back(kHeadsGroup);
        return g;
    }

    /// f(group, name, Param&) for every parameter tensor, in a fixed order.
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    void zero_grad() {
        visit([](const std::string&, const std::string&, Param& p) { p.zero_grad(); });
    }

    // -----------------------------------------------------------------------

    struct Forward {
        std::array<Decoder::Cache, 3> dec;
        std::array<Mat, 3> hidden;   // scale order
        std::array<Mat, 3> aligned;  // target order
        std::array<Mat, 3> tokens;   // target order, T × 6N
        std::array<FusionCache, kNumFields> fusion;
        std::array<Mat, kNumFields> fused;
        std::array<Mat, kNumFields> logits;
        std::array<Mat, kNumFields> dlogits;
    };

    /// Teacher-forced forward pass and loss: mean over positions of the
    /// summed per-field cross-entropy. `precomputed` supplies decoder outputs
    /// (scale order) for decoders the caller has already run.
    LossReport forward(const Example& ex, Forward& fw,
                       const std::array<const Mat*, 3>& precomputed = {nullptr, nullptr, nullptr}) const {
        const auto T = static_cast<Eigen::Index>(ex.length());
        if (T == 0) fail(Errc::ShapeMismatch, "empty example");
        if (ex.target != target) fail(Errc::GraphMismatch, "example target scale does not match the model");
        if (T > config.max_len) fail(Errc::ShapeMismatch, "sequence longer than max_len");
        for (Scale s : kScales) {
            if (!active(s)) continue;
            const int si = static_cast<int>(s);
            if (static_cast<Eigen::Index>(ex.inputs[si].size()) != T || static_cast<Eigen::Index>(ex.gather[si].size()) != T)
                fail(Errc::ShapeMismatch, std::string("inputs for scale ") + std::string(scale_name(s)));
            if (precomputed[si]) {
                fw.hidden[si] = *precomputed[si];
            } else {
                fw.hidden[si] = decoder(s).forward(ex.inputs[si], fw.dec[si]);
            }
            fw.aligned[si].resize(T, config.decoder.d_model);
            for (Eigen::Index j = 0; j < T; ++j) fw.aligned[si].row(j) = fw.hidden[si].row(ex.gather[si][j]);
            fw.tokens[si] = decompose.forward(fw.aligned[si]);
        }
        const int N = config.token_dim;
        LossReport rep;
        rep.positions = static_cast<std::size_t>(T);
        for (int f = 0; f < kNumFields; ++f) {
            if (kind == ModelKind::single_scale) {
                fw.fused[f] = fw.tokens[static_cast<int>(target)].middleCols(f * N, N);
            } else {
                ScaleTriple h = token_triple(fw, f);
                fw.fused[f] = fusion == FusionMode::global ? global_fusion.forward(static_cast<Field>(f), h, fw.fusion[f])
                                                           : local_fusion.forward(static_cast<Field>(f), h, fw.fusion[f]);
            }
            fw.logits[f] = heads[f].forward(fw.fused[f]);
            Mat p = softmax_rows(fw.logits[f]);
            double sum = 0.0;
            for (Eigen::Index t = 0; t < T; ++t) {
                int y = ex.targets[t].codes[f];
                if (y < 0 || y >= p.cols()) fail(Errc::CodeOutOfRange, "target code out of range");
                sum += log_sum_exp(fw.logits[f].row(t)) - fw.logits[f](t, y);
                p(t, y) -= 1.0;
            }
            fw.dlogits[f] = p / static_cast<double>(T);
            rep.per_field[f] = sum / static_cast<double>(T);
            rep.total += rep.per_field[f];
        }
        return rep;
    }

    /// Accumulates weight · dLoss/dθ into every unfrozen parameter.
    void backward(const Example& ex, const Forward& fw, double weight = 1.0) {
        const int N = config.token_dim;
        const auto T = static_cast<Eigen::Index>(ex.length());
        std::array<Mat, 3> dtokens;
        for (Scale s : kScales)
            if (active(s)) dtokens[static_cast<int>(s)] = Mat::Zero(T, kNumFields * N);
        for (int f = 0; f < kNumFields; ++f) {
            Mat dfused = heads[f].backward(fw.fused[f], fw.dlogits[f] * weight, !is_frozen(kHeadsGroup));
            if (kind == ModelKind::single_scale) {
                dtokens[static_cast<int>(target)].middleCols(f * N, N) = dfused;
                continue;
            }
            ScaleTriple h = token_triple(fw, f);
            bool acc = !is_frozen(kFusionGroup);
            ScaleTriple dh = fusion == FusionMode::global
                                 ? global_fusion.backward(static_cast<Field>(f), h, fw.fusion[f], dfused, acc)
                                 : local_fusion.backward(static_cast<Field>(f), h, fw.fusion[f], dfused, acc);
            for (int s = 0; s < 3; ++s) dtokens[s].middleCols(f * N, N) = dh[s];
        }
        for (Scale s : kScales) {
            if (!active(s)) continue;
            const int si = static_cast<int>(s);
            const bool dec_frozen = is_frozen(decoder_group(s));
            Mat daligned = decompose.backward(fw.aligned[si], dtokens[si], !is_frozen(kDecomposeGroup));
            if (dec_frozen) continue;
            Mat dhidden = Mat::Zero(T, config.decoder.d_model);
            for (Eigen::Index j = 0; j < T; ++j) dhidden.row(ex.gather[si][j]) += daligned.row(j);
            decoder(s).backward(ex.inputs[si], fw.dec[si], dhidden);
        }
    }

    // -----------------------------------------------------------------------
    // Inference

    struct NextLogits {
        std::array<RowVec, kNumFields> logits;
        Eigen::Matrix<double, kNumFields, 3> alpha = Eigen::Matrix<double, kNumFields, 3>::Zero();
    };

    /// Logits for the event following `prefix` (given in generation order).
    /// Each non-target decoder reads the prefix re-serialized in its own
    /// order; every decoder contributes its final-position output.
    NextLogits next_logits(std::span<const Event> prefix) const {
        if (prefix.empty()) fail(Errc::ShapeMismatch, "empty prefix");
        if (static_cast<int>(prefix.size()) > config.max_len) fail(Errc::PromptTooLong, "prefix exceeds max_len");
        std::array<Mat, 3> last;
        for (Scale s : kScales) {
            if (!active(s)) continue;
            Decoder::Cache cache;
            Mat h = (s == target) ? decoder(s).forward(prefix, cache)
                                  : decoder(s).forward(serialize(prefix, s).events, cache);
            last[static_cast<int>(s)] = decompose.forward(h.bottomRows(1));
        }
        const int N = config.token_dim;
        NextLogits out;
        for (int f = 0; f < kNumFields; ++f) {
            Mat fused;
            if (kind == ModelKind::single_scale) {
                fused = last[static_cast<int>(target)].middleCols(f * N, N);
            } else {
                ScaleTriple h;
                for (int s = 0; s < 3; ++s) h[s] = last[s].middleCols(f * N, N);
                FusionCache c;
                fused = fusion == FusionMode::global ? global_fusion.forward(static_cast<Field>(f), h, c)
                                                     : local_fusion.forward(static_cast<Field>(f), h, c);
                out.alpha.row(f) = c.alpha.row(0);
            }
            out.logits[f] = heads[f].forward(fused).row(0);
        }
        return out;
    }

private:
    Model(const ModelConfig& cfg, ModelKind k, Scale t, FusionMode fm)
        : config(cfg), kind(k), target(t), fusion(fm), decompose(cfg.decoder.d_model, kNumFields * cfg.token_dim),
          local_fusion(cfg.token_dim) {
        if (cfg.token_dim <= 0 || cfg.max_len <= 0) fail(Errc::ShapeMismatch, "invalid model dimensions");
        for (Field f : kFields) heads[static_cast<int>(f)] = Linear(cfg.token_dim, Vocabulary::size(f));
    }

    void init(Rng& rng) {
        for (Scale s : kScales)
            if (active(s)) decoder(s).init(rng);
        decompose.w.init_normal(rng, 0.02);
        for (auto& h : heads) h.w.init_normal(rng, 0.02);
        // fusion scores start at zero: uniform weights over the three scales
    }

    ScaleTriple token_triple(const Forward& fw, int f) const {
        const int N = config.token_dim;
        ScaleTriple h;
        for (int s = 0; s < 3; ++s) h[s] = fw.tokens[s].middleCols(f * N, N);
        return h;
    }

    template <class Self, class F>
    static void visit_impl(Self& self, F& f) {
        for (Scale s : kScales) {
            if (!self.active(s)) continue;
            const std::string& g = decoder_group(s);
            self.decoder(s).visit(g, [&](const std::string& name, auto& p) { f(g, name, p); });
        }
        self.decompose.visit(kDecomposeGroup, [&](const std::string& name, auto& p) { f(kDecomposeGroup, name, p); });
        if (self.kind == ModelKind::msat) {
            auto fv = [&](const std::string& name, auto& p) { f(kFusionGroup, name, p); };
            if (self.fusion == FusionMode::global)
                self.global_fusion.visit(kFusionGroup + ".global", fv);
            else
                self.local_fusion.visit(kFusionGroup + ".local", fv);
        }
        for (Field fl : kFields)
            self.heads[static_cast<int>(fl)].visit(kHeadsGroup + "." + std::string(field_name(fl)),
                                                   [&](const std::string& name, auto& p) { f(kHeadsGroup, name, p); });
    }
};

}  // namespace msat::nn
