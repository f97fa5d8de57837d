#pragma once

// Autoregressive sampling for instrument-informed generation and N-beat
// continuation. Every step re-runs all decoders on the current prefix; the
// note and track decoders read it re-serialized in their own orders.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msat/nn/model.hpp"
#include "msat/representation.hpp"
#include "msat/rng.hpp"

namespace msat {

struct SamplingConfig {
    std::array<double, kNumFields> temperature{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    std::array<int, kNumFields> top_k{32, 32, 32, 32, 32, 32};
    int max_events = 1024;
    std::uint64_t seed = 0;
    bool validity = true;

    void validate() const {
        for (double t : temperature)
            if (!(t > 0)) fail(Errc::Config, "temperature must be positive");
        for (int k : top_k)
            if (k < 1) fail(Errc::Config, "top_k must be at least 1");
        if (max_events < 1) fail(Errc::Config, "max_events must be positive");
    }
};

enum class TaskKind { instrument_informed, continuation };

struct GenerationTask {
    TaskKind kind = TaskKind::instrument_informed;
    std::vector<int> instruments;  // programs, instrument-informed task
    CanonicalSong prompt;          // continuation task
    int n_beats = 16;

    static GenerationTask instrument_informed(std::vector<int> programs) {
        GenerationTask t;
        t.instruments = std::move(programs);
        return t;
    }
    /// The instrument set of a reference song.
    static GenerationTask instruments_of(const CanonicalSong& s) {
        std::vector<int> p;
        for (const auto& t : s.tracks) p.push_back(t.program);
        return instrument_informed(std::move(p));
    }
    static GenerationTask continuation(CanonicalSong prompt, int n_beats = 16) {
        GenerationTask t;
        t.kind = TaskKind::continuation;
        t.prompt = std::move(prompt);
        t.n_beats = n_beats;
        return t;
    }
};

/// Opening events: header only for the instrument-informed task; header
/// plus every note with beat < N, in bar order, for continuation.
inline std::vector<Event> prompt_events(const GenerationTask& task) {
    if (task.kind == TaskKind::instrument_informed) {
        if (task.instruments.empty()) fail(Errc::InvalidTask, "instrument-informed generation needs an instrument");
        std::set<int> programs(task.instruments.begin(), task.instruments.end());
        std::vector<Event> ev{Event::sos()};
        for (int p : programs) {
            if (p < 0 || p >= kNumPrograms) fail(Errc::InvalidTask, "program " + std::to_string(p) + " out of range");
            ev.push_back(Event::instrument(p));
        }
        ev.push_back(Event::son());
        return ev;
    }
    if (task.n_beats < 1) fail(Errc::InvalidTask, "n_beats must be positive");
    if (task.prompt.length_beats < task.n_beats)
        fail(Errc::InvalidTask, "prompt spans " + std::to_string(task.prompt.length_beats) + " beats, fewer than " +
                                    std::to_string(task.n_beats));
    if (task.prompt.tracks.empty()) fail(Errc::InvalidTask, "prompt declares no instruments");
    auto bar = serialize(encode(task.prompt), Scale::bar).events;
    std::vector<Event> ev;
    for (const Event& e : bar) {
        if (e.type() == EventType::eos) continue;
        if (e.type() == EventType::note && Vocabulary::beat_value(e[Field::beat]) >= task.n_beats) continue;
        ev.push_back(e);
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Validity mask

struct ValidityMask {
    std::array<std::vector<bool>, kNumFields> allowed;

    ValidityMask() {
        for (Field f : kFields) allowed[static_cast<int>(f)].assign(Vocabulary::size(f), true);
    }
    std::size_t count(Field f) const {
        const auto& a = allowed[static_cast<int>(f)];
        return static_cast<std::size_t>(std::count(a.begin(), a.end(), true));
    }
};

/// Grammar constraints on the event following `context`. NOTE fields take
/// no NULL codes; instruments are limited to the declared ones; with bar
/// order the bar index never decreases; beats stay at or above `min_beat`.
inline ValidityMask validity_mask(std::span<const Event> context, bool bar_order = true, int min_beat = 0) {
    ValidityMask m;
    auto& type = m.allowed[static_cast<int>(Field::type)];
    std::fill(type.begin(), type.end(), false);
    const bool after_son =
        std::any_of(context.begin(), context.end(), [](const Event& e) { return e.type() == EventType::son; });
    if (after_son) {
        type[static_cast<int>(EventType::note)] = true;
        type[static_cast<int>(EventType::eos)] = true;
    } else if (context.empty()) {
        type[static_cast<int>(EventType::sos)] = true;
    } else {
        type[static_cast<int>(EventType::instrument)] = true;
        type[static_cast<int>(EventType::son)] = true;
    }
    for (Field f : kFields)
        if (f != Field::type) m.allowed[static_cast<int>(f)][kNullCode] = false;

    auto& inst = m.allowed[static_cast<int>(Field::instrument)];
    std::fill(inst.begin(), inst.end(), false);
    int floor = std::max(0, min_beat);
    for (const Event& e : context) {
        if (e.type() == EventType::instrument) inst[e[Field::instrument]] = true;
        if (bar_order && e.type() == EventType::note && well_formed(e)) {
            int bar_start = Vocabulary::beat_value(e[Field::beat]) / kBeatsPerBar * kBeatsPerBar;
            floor = std::max(floor, bar_start);
        }
    }
    if (!after_son) std::fill(inst.begin() + 1, inst.end(), true);  // header still open
    auto& beat = m.allowed[static_cast<int>(Field::beat)];
    for (int b = 0; b < kMaxBeats && b < floor; ++b) beat[Vocabulary::beat_code(b)] = false;
    if (after_son && floor >= kMaxBeats) type[static_cast<int>(EventType::note)] = false;  // no room left
    return m;
}

// ---------------------------------------------------------------------------
// Sampling

/// Draws one code from softmax(logits / temperature) restricted to the
/// `top_k` most likely allowed codes (ties broken toward lower codes). An
/// empty allowed set falls back to the unrestricted distribution.
inline int sample_code(const nn::RowVec& logits, const std::vector<bool>& allowed, double temperature, int top_k,
                       Rng& rng, bool& fell_back) {
    const int V = static_cast<int>(logits.size());
    std::vector<int> idx;
    for (int c = 0; c < V; ++c)
        if (allowed[c]) idx.push_back(c);
    fell_back = idx.empty();
    if (fell_back) {
        idx.resize(V);
        std::iota(idx.begin(), idx.end(), 0);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return logits(a) > logits(b); });
    if (static_cast<int>(idx.size()) > top_k) idx.resize(top_k);
    std::vector<double> w(idx.size());
    const double top = logits(idx[0]) / temperature;
    for (std::size_t i = 0; i < idx.size(); ++i) w[i] = std::exp(logits(idx[i]) / temperature - top);
    const double u = rng.uniform() * std::accumulate(w.begin(), w.end(), 0.0);
    double acc = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        acc += w[i];
        if (u < acc) return idx[i];
    }
    return idx.back();
}

struct GenerationDiagnostics {
    int generated_events = 0;
    int masked_fallbacks = 0;  // fields whose validity mask was empty
    int grammar_repairs = 0;   // structural types remapped to NOTE
    int dropped_notes = 0;     // malformed notes removed at decoding
    std::string stop_reason;   // "eos" or "max_events"

    nlohmann::json to_json() const {
        return {{"generated_events", generated_events}, {"masked_fallbacks", masked_fallbacks},
                {"grammar_repairs", grammar_repairs},   {"dropped_notes", dropped_notes},
                {"stop_reason", stop_reason}};
    }
};

struct GenerationResult {
    CanonicalSong song;
    std::vector<Event> events;
    GenerationDiagnostics diagnostics;
};

inline GenerationResult generate(const nn::Model& model, const GenerationTask& task, const SamplingConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    GenerationResult out;
    out.events = prompt_events(task);
    if (static_cast<int>(out.events.size()) > model.config.max_len)
        fail(Errc::PromptTooLong, "prompt of " + std::to_string(out.events.size()) + " events exceeds max_len " +
                                      std::to_string(model.config.max_len));
    const int min_beat = task.kind == TaskKind::continuation ? task.n_beats : 0;
    const int limit = std::min(cfg.max_events, model.config.max_len);
    const bool bar_order = model.target == Scale::bar;
    auto& d = out.diagnostics;
    d.stop_reason = "max_events";
    while (static_cast<int>(out.events.size()) < limit) {
        auto next = model.next_logits(out.events);
        ValidityMask mask;
        if (cfg.validity) mask = validity_mask(out.events, bar_order, min_beat);
        Event e;
        for (Field f : kFields) {
            const int fi = static_cast<int>(f);
            bool fell_back = false;
            e.codes[fi] = sample_code(next.logits[fi], mask.allowed[fi], cfg.temperature[fi], cfg.top_k[fi], rng, fell_back);
            if (fell_back) ++d.masked_fallbacks;
            if (f == Field::type && e.type() == EventType::eos) break;
        }
        if (e.type() == EventType::eos) {
            d.stop_reason = "eos";
            break;
        }
        if (e.type() != EventType::note) {
            e.codes[static_cast<int>(Field::type)] = static_cast<int>(EventType::note);
            ++d.grammar_repairs;
        }
        out.events.push_back(e);
        ++d.generated_events;
    }
    auto decoded = deserialize(out.events, false);
    out.song = std::move(decoded.song);
    d.dropped_notes = decoded.dropped_notes;
    return out;
}

/// Notes with onset before `n_beats`, per program.
inline std::vector<std::pair<int, std::vector<Note>>> opening(const CanonicalSong& s, int n_beats) {
    std::vector<std::pair<int, std::vector<Note>>> out;
    for (const auto& t : s.tracks) {
        std::vector<Note> head;
        for (const auto& n : t.notes)
            if (n.beat < n_beats) head.push_back(n);
        out.emplace_back(t.program, std::move(head));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Attention report

/// Softmaxed global fusion weights, one row per token type.
inline Eigen::Matrix<double, kNumFields, 3> attn_report(const nn::Model& m) {
    if (m.kind != nn::ModelKind::msat || m.fusion != nn::FusionMode::global)
        fail(Errc::WrongFusionMode, "attention report needs a global-fusion model");
    Eigen::Matrix<double, kNumFields, 3> a;
    for (Field f : kFields) a.row(static_cast<int>(f)) = m.global_fusion.alpha(f);
    return a;
}

inline std::string format_attn_report(const Eigen::Matrix<double, kNumFields, 3>& a) {
    std::ostringstream o;
    o << std::left << std::setw(12) << "token_type" << std::right << std::setw(10) << "note" << std::setw(10) << "bar"
      << std::setw(10) << "track" << "\n";
    o << std::fixed << std::setprecision(6);
    for (Field f : kFields) {
        const auto r = static_cast<int>(f);
        o << std::left << std::setw(12) << field_name(f) << std::right << std::setw(10) << a(r, 0) << std::setw(10)
          << a(r, 1) << std::setw(10) << a(r, 2) << "\n";
    }
    return o.str();
}

}  // namespace msat
