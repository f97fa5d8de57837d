#pragma once

// Single-scale pretraining and multi-scale training with frozen note and
// track decoders. Adam with global-norm clipping; the checkpoint with the
// best validation loss is kept.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "msat/config.hpp"
#include "msat/dataset.hpp"
#include "msat/nn/checkpoint.hpp"
#include "msat/nn/model.hpp"

namespace msat {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_epsilon = 1e-9;
    double clip_norm = 1.0;
    int batch_size = 8;
    int max_steps = 1000;
    int max_len = 1024;
    std::uint64_t seed = 0;
    nn::FusionMode fusion = nn::FusionMode::global;
    Scale target_scale = Scale::bar;
    int valid_every = 100;
    std::string checkpoint;
    std::string bar_init = "pretrained";  // or "scratch"
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int token_dim = 64;

    nn::ModelConfig model_config() const {
        nn::ModelConfig c;
        c.decoder = {d_model, n_layers, n_heads, d_ff};
        c.token_dim = token_dim;
        c.max_len = max_len;
        return c;
    }

    KeyValues to_key_values() const {
        auto num = [](double v) {
            std::ostringstream o;
            o.precision(17);
            o << v;
            return o.str();
        };
        return {{"learning_rate", num(learning_rate)},
                {"beta1", num(beta1)},
                {"beta2", num(beta2)},
                {"adam_epsilon", num(adam_epsilon)},
                {"clip_norm", num(clip_norm)},
                {"batch_size", std::to_string(batch_size)},
                {"max_steps", std::to_string(max_steps)},
                {"max_len", std::to_string(max_len)},
                {"seed", std::to_string(seed)},
                {"fusion", std::string(nn::fusion_name(fusion))},
                {"target_scale", std::string(scale_name(target_scale))},
                {"valid_every", std::to_string(valid_every)},
                {"checkpoint", checkpoint},
                {"bar_init", bar_init},
                {"d_model", std::to_string(d_model)},
                {"n_layers", std::to_string(n_layers)},
                {"n_heads", std::to_string(n_heads)},
                {"d_ff", std::to_string(d_ff)},
                {"token_dim", std::to_string(token_dim)}};
    }

    /// Overrides fields named in `kv`; unknown keys are rejected.
    static TrainConfig from_key_values(const KeyValues& kv) { return from_key_values(kv, TrainConfig()); }

    static TrainConfig from_key_values(const KeyValues& kv, TrainConfig c) {
        check_known_keys(kv, c.to_key_values());
        for (const auto& [k, v] : kv) {
            if (k == "learning_rate") c.learning_rate = parse_double(k, v);
            else if (k == "beta1") c.beta1 = parse_double(k, v);
            else if (k == "beta2") c.beta2 = parse_double(k, v);
            else if (k == "adam_epsilon") c.adam_epsilon = parse_double(k, v);
            else if (k == "clip_norm") c.clip_norm = parse_double(k, v);
            else if (k == "batch_size") c.batch_size = static_cast<int>(parse_int(k, v));
            else if (k == "max_steps") c.max_steps = static_cast<int>(parse_int(k, v));
            else if (k == "max_len") c.max_len = static_cast<int>(parse_int(k, v));
            else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(k, v));
            else if (k == "fusion") c.fusion = nn::parse_fusion(v);
            else if (k == "target_scale") c.target_scale = parse_scale(v);
            else if (k == "valid_every") c.valid_every = static_cast<int>(parse_int(k, v));
            else if (k == "checkpoint") c.checkpoint = v;
            else if (k == "bar_init") c.bar_init = v;
            else if (k == "d_model") c.d_model = static_cast<int>(parse_int(k, v));
            else if (k == "n_layers") c.n_layers = static_cast<int>(parse_int(k, v));
            else if (k == "n_heads") c.n_heads = static_cast<int>(parse_int(k, v));
            else if (k == "d_ff") c.d_ff = static_cast<int>(parse_int(k, v));
            else if (k == "token_dim") c.token_dim = static_cast<int>(parse_int(k, v));
        }
        c.validate();
        return c;
    }

    void validate() const {
        if (!(learning_rate > 0)) fail(Errc::Config, "learning_rate must be positive");
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail(Errc::Config, "betas must lie in [0, 1)");
        if (!(adam_epsilon > 0)) fail(Errc::Config, "adam_epsilon must be positive");
        if (!(clip_norm > 0)) fail(Errc::Config, "clip_norm must be positive");
        if (batch_size < 1) fail(Errc::Config, "batch_size must be at least 1");
        if (max_steps < 0) fail(Errc::Config, "max_steps must be non-negative");
        if (max_len < 8) fail(Errc::Config, "max_len must be at least 8");
        if (valid_every < 1) fail(Errc::Config, "valid_every must be at least 1");
        if (bar_init != "pretrained" && bar_init != "scratch") fail(Errc::Config, "bar_init must be pretrained or scratch");
        if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || token_dim < 1)
            fail(Errc::Config, "model dimensions must be positive");
        if (d_model % n_heads != 0) fail(Errc::Config, "n_heads must divide d_model");
    }
};

inline TrainConfig load_train_config(const std::filesystem::path& p) {
    return TrainConfig::from_key_values(parse_key_values(read_text_file(p)));
}

// ---------------------------------------------------------------------------
// Loss and evaluation

/// Per-field cross-entropy of six logit arrays against target events: mean
/// over positions of the summed per-field negative log-probabilities.
inline nn::LossReport sequence_loss(const std::array<nn::Mat, kNumFields>& logits, std::span<const Event> targets) {
    nn::LossReport r;
    r.positions = targets.size();
    for (int f = 0; f < kNumFields; ++f) {
        if (logits[f].rows() != static_cast<Eigen::Index>(targets.size()) ||
            logits[f].cols() != Vocabulary::size(static_cast<Field>(f)))
            fail(Errc::ShapeMismatch, "logits do not match targets");
        double s = 0;
        for (std::size_t t = 0; t < targets.size(); ++t) {
            auto row = static_cast<Eigen::Index>(t);
            s += nn::log_sum_exp(logits[f].row(row)) - logits[f](row, targets[t].codes[f]);
        }
        r.per_field[f] = targets.empty() ? 0.0 : s / static_cast<double>(targets.size());
        r.total += r.per_field[f];
    }
    return r;
}

/// Decoder outputs of frozen decoders, computed once per example.
using FrozenHidden = std::array<std::optional<nn::Mat>, 3>;

inline FrozenHidden frozen_hidden(const nn::Model& m, const nn::Example& ex) {
    FrozenHidden out;
    for (Scale s : kScales) {
        if (!m.active(s) || !m.is_frozen(nn::decoder_group(s))) continue;
        nn::Decoder::Cache c;
        out[static_cast<int>(s)] = m.decoder(s).forward(ex.inputs[static_cast<int>(s)], c);
    }
    return out;
}

inline std::array<const nn::Mat*, 3> as_pointers(const FrozenHidden& h) {
    std::array<const nn::Mat*, 3> p{};
    for (int s = 0; s < 3; ++s) p[s] = h[s] ? &*h[s] : nullptr;
    return p;
}

/// Position-weighted mean loss over a set of examples.
inline nn::LossReport evaluate_examples(const nn::Model& m, const std::vector<nn::Example>& ex,
                                        const std::vector<FrozenHidden>& cache) {
    nn::LossReport total;
    for (std::size_t i = 0; i < ex.size(); ++i) {
        nn::Model::Forward fw;
        auto r = m.forward(ex[i], fw, as_pointers(cache[i]));
        const double w = static_cast<double>(r.positions);
        total.total += w * r.total;
        for (int f = 0; f < kNumFields; ++f) total.per_field[f] += w * r.per_field[f];
        total.positions += r.positions;
    }
    if (total.positions > 0) {
        const double n = static_cast<double>(total.positions);
        total.total /= n;
        for (auto& v : total.per_field) v /= n;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GroupCheck {
    std::string group;
    bool skipped = false;        // frozen
    bool gradient_zero = true;   // analytic gradient exactly zero (frozen groups)
    std::size_t checked = 0;
    std::size_t failures = 0;
    double max_abs = 0.0;
    double max_rel = 0.0;  // over entries beyond the absolute tolerance

    bool passed() const { return skipped ? gradient_zero : failures == 0; }
};

struct GradCheckReport {
    std::vector<GroupCheck> groups;

    bool passed() const {
        return std::all_of(groups.begin(), groups.end(), [](const GroupCheck& g) { return g.passed(); });
    }

    std::string format() const {
        std::ostringstream o;
        for (const auto& g : groups) {
            o << g.group << ": ";
            if (g.skipped)
                o << "skipped (frozen, gradient " << (g.gradient_zero ? "zero" : "NONZERO") << ")\n";
            else
                o << (g.passed() ? "pass" : "FAIL") << " checked=" << g.checked << " failures=" << g.failures
                  << " max_abs=" << g.max_abs << " max_rel=" << g.max_rel << "\n";
        }
        return o.str();
    }
};

/// Central differences against analytic gradients for every parameter.
/// An entry passes when its absolute or its relative deviation is within
/// tolerance. Frozen groups are skipped but their gradients must be zero.
inline GradCheckReport grad_check(nn::Model& m, const nn::Example& ex, double eps = 1e-4, double rel_tol = 1e-4,
                                  double abs_tol = 1e-7) {
    m.zero_grad();
    {
        nn::Model::Forward fw;
        m.forward(ex, fw);
        m.backward(ex, fw);
    }
    auto loss = [&] {
        nn::Model::Forward fw;
        return m.forward(ex, fw).total;
    };
    GradCheckReport rep;
    for (const auto& g : m.groups()) rep.groups.push_back({g, m.is_frozen(g)});
    auto find = [&](const std::string& g) -> GroupCheck& {
        return *std::find_if(rep.groups.begin(), rep.groups.end(), [&](const GroupCheck& c) { return c.group == g; });
    };
    m.visit([&](const std::string& group, const std::string&, nn::Param& p) {
        GroupCheck& gc = find(group);
        if (gc.skipped) {
            if (p.grad.size() > 0 && p.grad.cwiseAbs().maxCoeff() != 0.0) gc.gradient_zero = false;
            return;
        }
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            const double orig = p.value.data()[i];
            p.value.data()[i] = orig + eps;
            const double up = loss();
            p.value.data()[i] = orig - eps;
            const double down = loss();
            p.value.data()[i] = orig;
            const double num = (up - down) / (2.0 * eps);
            const double ana = p.grad.data()[i];
            const double diff = std::abs(num - ana);
            ++gc.checked;
            gc.max_abs = std::max(gc.max_abs, diff);
            if (diff <= abs_tol) continue;
            const double rel = diff / std::max(std::abs(num), std::abs(ana));
            gc.max_rel = std::max(gc.max_rel, rel);
            if (rel > rel_tol) ++gc.failures;
        }
    });
    return rep;
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
public:
    Adam(const nn::Model& m, const TrainConfig& c) : cfg_(c) {
        m.visit([&](const std::string&, const std::string&, const nn::Param& p) {
            m_.push_back(nn::Mat::Zero(p.value.rows(), p.value.cols()));
            v_.push_back(nn::Mat::Zero(p.value.rows(), p.value.cols()));
        });
    }

    /// Clips the global gradient norm of unfrozen groups, then updates them.
    /// Returns the pre-clip norm.
    double step(nn::Model& m) {
        double sq = 0;
        m.visit([&](const std::string& g, const std::string&, const nn::Param& p) {
            if (!m.is_frozen(g)) sq += p.grad.squaredNorm();
        });
        const double norm = std::sqrt(sq);
        const double scale = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_), c2 = 1.0 - std::pow(cfg_.beta2, t_);
        std::size_t i = 0;
        m.visit([&](const std::string& g, const std::string&, nn::Param& p) {
            const std::size_t k = i++;
            if (m.is_frozen(g)) return;
            nn::Mat grad = p.grad * scale;
            m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * grad;
            v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
            p.value.array() -=
                cfg_.learning_rate * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + cfg_.adam_epsilon);
        });
        return norm;
    }

private:
    TrainConfig cfg_;
    std::vector<nn::Mat> m_, v_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct LogRecord {
    int step = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::array<double, kNumFields> valid_per_field{};
    std::optional<Eigen::Matrix<double, kNumFields, 3>> alpha;  // global fusion only

    std::string format() const {
        std::ostringstream o;
        o.precision(6);
        o << "step=" << step << " train=" << train_loss << " valid=" << valid_loss;
        for (Field f : kFields) o << " " << field_name(f) << "=" << valid_per_field[static_cast<int>(f)];
        if (alpha) {
            o << " alpha";
            for (Field f : kFields) {
                const auto r = static_cast<int>(f);
                o << " " << field_name(f) << "=" << (*alpha)(r, 0) << "," << (*alpha)(r, 1) << "," << (*alpha)(r, 2);
            }
        }
        return o.str();
    }
};

struct TrainResult {
    nn::Checkpoint best;
    int best_step = 0;
    double best_loss = 0.0;
    std::vector<LogRecord> log;
    bool validated_on_train = false;  // no validation songs were given
};

inline Eigen::Matrix<double, kNumFields, 3> global_alpha(const nn::Model& m) {
    Eigen::Matrix<double, kNumFields, 3> a;
    for (Field f : kFields) a.row(static_cast<int>(f)) = m.global_fusion.alpha(f);
    return a;
}

namespace detail {

inline std::vector<nn::Example> build_examples(const std::vector<CanonicalSong>& songs, Scale target, int max_len) {
    std::vector<nn::Example> out;
    for (const auto& s : songs)
        for (auto& ex : make_examples(s, target, max_len)) out.push_back(std::move(ex));
    return out;
}

inline void check_frozen_gradients(const nn::Model& m) {
    m.visit([&](const std::string& g, const std::string& name, const nn::Param& p) {
        if (m.is_frozen(g) && p.grad.size() > 0 && p.grad.cwiseAbs().maxCoeff() != 0.0)
            fail(Errc::FreezeViolation, "nonzero gradient on frozen parameter " + name);
    });
}

inline TrainResult run_training(nn::Model model, const std::vector<CanonicalSong>& train,
                                const std::vector<CanonicalSong>& valid, const TrainConfig& cfg, Rng& rng,
                                std::ostream* log) {
    if (train.empty()) fail(Errc::EmptyCorpus, "no training songs");
    const int max_len = std::min(cfg.max_len, model.config.max_len);
    auto train_ex = build_examples(train, model.target, max_len);
    auto valid_ex = build_examples(valid, model.target, max_len);
    if (train_ex.empty()) fail(Errc::EmptyCorpus, "no training sequences");
    for (const auto& ex : train_ex)
        if (!targets_aligned(ex)) fail(Errc::ShapeMismatch, "realigned targets disagree across scales");

    std::vector<FrozenHidden> train_cache, valid_cache;
    for (const auto& ex : train_ex) train_cache.push_back(frozen_hidden(model, ex));
    for (const auto& ex : valid_ex) valid_cache.push_back(frozen_hidden(model, ex));
    const bool on_train = valid_ex.empty();
    const auto& eval_ex = on_train ? train_ex : valid_ex;
    const auto& eval_cache = on_train ? train_cache : valid_cache;

    TrainResult result;
    result.validated_on_train = on_train;
    auto record = [&](int step, double train_loss) {
        LogRecord r;
        r.step = step;
        auto v = evaluate_examples(model, eval_ex, eval_cache);
        if (!std::isfinite(v.total)) fail(Errc::DivergenceDetected, "non-finite validation loss at step " + std::to_string(step));
        r.train_loss = std::isnan(train_loss) ? evaluate_examples(model, train_ex, train_cache).total : train_loss;
        r.valid_loss = v.total;
        r.valid_per_field = v.per_field;
        if (model.kind == nn::ModelKind::msat && model.fusion == nn::FusionMode::global) r.alpha = global_alpha(model);
        if (log) *log << r.format() << "\n" << std::flush;
        if (result.log.empty() || r.valid_loss < result.best_loss) {
            result.best_loss = r.valid_loss;
            result.best_step = step;
            result.best.model = model;
        }
        result.log.push_back(r);
    };

    std::vector<std::size_t> order(train_ex.size());
    std::size_t cursor = order.size();
    auto next_index = [&] {
        if (cursor == order.size()) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::shuffle(order.begin(), order.end(), rng.engine());
            cursor = 0;
        }
        return order[cursor++];
    };

    Adam adam(model, cfg);
    record(0, std::numeric_limits<double>::quiet_NaN());
    double running = 0.0;
    int since = 0;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        std::vector<std::size_t> batch;
        for (int b = 0; b < std::min<int>(cfg.batch_size, static_cast<int>(train_ex.size())); ++b)
            batch.push_back(next_index());
        std::size_t positions = 0;
        for (auto i : batch) positions += train_ex[i].length();
        model.zero_grad();
        double batch_loss = 0.0;
        for (auto i : batch) {
            const auto& ex = train_ex[i];
            if (!targets_aligned(ex)) fail(Errc::ShapeMismatch, "realigned targets disagree across scales");
            const double w = static_cast<double>(ex.length()) / static_cast<double>(positions);
            nn::Model::Forward fw;
            nn::LossReport r;
            try {
                r = model.forward(ex, fw, as_pointers(train_cache[i]));
            } catch (const Error& e) {
                if (e.code() == Errc::NonFiniteActivation)
                    fail(Errc::DivergenceDetected, "step " + std::to_string(step) + ": " + e.what());
                throw;
            }
            if (!std::isfinite(r.total)) fail(Errc::DivergenceDetected, "non-finite loss at step " + std::to_string(step));
            batch_loss += w * r.total;
            model.backward(ex, fw, w);
        }
        check_frozen_gradients(model);
        const double norm = adam.step(model);
        if (!std::isfinite(norm)) fail(Errc::DivergenceDetected, "non-finite gradient at step " + std::to_string(step));
        running += batch_loss;
        ++since;
        if (step % cfg.valid_every == 0 || step == cfg.max_steps) {
            record(step, running / since);
            running = 0.0;
            since = 0;
        }
    }
    result.best.meta = {{"best_step", result.best_step},
                        {"best_loss", result.best_loss},
                        {"validated_on", on_train ? "train" : "valid"},
                        {"train_config", cfg.to_key_values()}};
    if (!cfg.checkpoint.empty()) nn::save_checkpoint(cfg.checkpoint, result.best.model, result.best.meta);
    return result;
}

}  // namespace detail

/// Trains one decoder with decomposition and heads on `scale`'s ordering.
inline TrainResult train_single_scale(const std::vector<CanonicalSong>& train, const std::vector<CanonicalSong>& valid,
                                      Scale scale, const TrainConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    Rng rng(cfg.seed);
    nn::Model m = nn::Model::single_scale(cfg.model_config(), scale, rng);
    return detail::run_training(std::move(m), train, valid, cfg, rng, log);
}

/// Builds the multi-scale model from pretrained single-scale checkpoints:
/// note and track decoders are copied and frozen; the bar decoder comes from
/// `bar` when initialization is "pretrained" and is fresh otherwise.
inline nn::Model assemble_msat(const nn::Checkpoint& note, const nn::Checkpoint& track,
                               const std::optional<nn::Checkpoint>& bar, const TrainConfig& cfg, Rng& rng) {
    if (cfg.target_scale != Scale::bar) fail(Errc::Config, "the multi-scale model targets bar order");
    if (cfg.fusion == nn::FusionMode::none) fail(Errc::Config, "train-msat needs fusion = global or local");
    auto check = [](const nn::Checkpoint& c, Scale s, const char* what) {
        if (c.model.kind != nn::ModelKind::single_scale || c.model.target != s)
            fail(Errc::GraphMismatch, std::string(what) + " checkpoint is not a single-scale " +
                                          std::string(scale_name(s)) + " model");
    };
    check(note, Scale::note, "note");
    check(track, Scale::track, "track");
    if (!(note.model.config == track.model.config))
        fail(Errc::GraphMismatch, "note and track checkpoints have different shapes");
    nn::ModelConfig mc = note.model.config;
    nn::Model m = nn::Model::msat(mc, cfg.fusion, rng);
    m.decoder(Scale::note) = note.model.decoder(Scale::note);
    m.decoder(Scale::track) = track.model.decoder(Scale::track);
    if (cfg.bar_init == "pretrained") {
        if (!bar) fail(Errc::Config, "bar_init = pretrained needs a bar checkpoint");
        check(*bar, Scale::bar, "bar");
        if (!(bar->model.config == mc)) fail(Errc::GraphMismatch, "bar checkpoint shape differs from note/track");
        m.decoder(Scale::bar) = bar->model.decoder(Scale::bar);
    }
    m.zero_grad();
    return m;
}

inline TrainResult train_msat(const std::vector<CanonicalSong>& train, const std::vector<CanonicalSong>& valid,
                              const nn::Checkpoint& note, const nn::Checkpoint& track,
                              const std::optional<nn::Checkpoint>& bar, const TrainConfig& cfg,
                              std::ostream* log = nullptr) {
    cfg.validate();
    Rng rng(cfg.seed);
    nn::Model m = assemble_msat(note, track, bar, cfg, rng);
    return detail::run_training(std::move(m), train, valid, cfg, rng, log);
}

}  // namespace msat
