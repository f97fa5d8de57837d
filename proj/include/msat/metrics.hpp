#pragma once

// Objective metrics per song and per corpus. Entropy, scale and groove are
// computed over the pooled song; degenerate inputs get a defined value and
// a flag instead of an error.

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msat/song.hpp"

namespace msat {

struct MetricValue {
    double value = 0.0;
    bool flagged = false;
};

inline constexpr int kNumMetrics = 6;
inline constexpr std::array<std::string_view, kNumMetrics> kMetricNames = {
    "pitch_class_entropy",      "scale_consistency",          "groove_consistency",
    "empty_measure_rate",       "inter_instrument_similarity", "instrument_consistency"};

namespace detail {

inline double entropy_bits(const std::array<long, 12>& hist) {
    long total = 0;
    for (long c : hist) total += c;
    double h = 0;
    for (long c : hist)
        if (c > 0) {
            double p = static_cast<double>(c) / static_cast<double>(total);
            h -= p * std::log2(p);
        }
    return h;
}

inline std::array<long, 12> pitch_class_histogram(const std::vector<const Note*>& notes) {
    std::array<long, 12> h{};
    for (const Note* n : notes) ++h[n->pitch % 12];
    return h;
}

inline std::vector<const Note*> all_notes(const CanonicalSong& s) {
    std::vector<const Note*> out;
    for (const auto& t : s.tracks)
        for (const auto& n : t.notes) out.push_back(&n);
    return out;
}

inline int bar_count(const CanonicalSong& s) { return s.last_bar() + 1; }

/// Distinct instruments with at least one onset, per bar.
inline std::vector<int> instruments_per_bar(const CanonicalSong& s, int bars) {
    std::vector<int> c(static_cast<std::size_t>(std::max(0, bars)), 0);
    for (const auto& t : s.tracks) {
        std::set<int> hit;
        for (const auto& n : t.notes)
            if (n.bar() < bars) hit.insert(n.bar());
        for (int b : hit) ++c[b];
    }
    return c;
}

}  // namespace detail

/// Base-2 Shannon entropy of the 12-bin pitch-class histogram.
inline MetricValue pitch_class_entropy(const CanonicalSong& s) {
    auto notes = detail::all_notes(s);
    if (notes.empty()) return {0.0, true};
    return {detail::entropy_bits(detail::pitch_class_histogram(notes)), false};
}

/// Best fraction of notes inside one of the 24 major / natural-minor
/// scales, in percent.
inline MetricValue scale_consistency(const CanonicalSong& s) {
    auto notes = detail::all_notes(s);
    if (notes.empty()) return {100.0, true};
    auto hist = detail::pitch_class_histogram(notes);
    constexpr std::array<int, 7> major = {0, 2, 4, 5, 7, 9, 11};
    constexpr std::array<int, 7> minor = {0, 2, 3, 5, 7, 8, 10};
    long best = 0;
    for (int root = 0; root < 12; ++root)
        for (const auto& steps : {major, minor}) {
            long in = 0;
            for (int st : steps) in += hist[(root + st) % 12];
            best = std::max(best, in);
        }
    return {100.0 * static_cast<double>(best) / static_cast<double>(notes.size()), false};
}

/// 100 · (1 − mean normalized Hamming distance between the onset patterns
/// of consecutive bars).
inline MetricValue groove_consistency(const CanonicalSong& s) {
    const int bars = detail::bar_count(s);
    if (bars < 2) return {100.0, true};
    constexpr int slots = kBeatsPerBar * kResolution;
    std::vector<std::bitset<slots>> g(bars);
    for (const auto& t : s.tracks)
        for (const auto& n : t.notes) g[n.bar()].set((n.beat % kBeatsPerBar) * kResolution + n.position);
    double sum = 0;
    for (int b = 0; b + 1 < bars; ++b) sum += static_cast<double>((g[b] ^ g[b + 1]).count()) / slots;
    return {100.0 * (1.0 - sum / (bars - 1)), false};
}

/// Mean over instruments of the percentage of bars, up to the last sounded
/// bar, in which the instrument has no onset.
inline MetricValue empty_measure_rate(const CanonicalSong& s) {
    const int bars = detail::bar_count(s);
    if (bars < 1 || s.tracks.empty()) return {100.0, true};
    double sum = 0;
    for (const auto& t : s.tracks) {
        std::set<int> hit;
        for (const auto& n : t.notes) hit.insert(n.bar());
        sum += static_cast<double>(bars - static_cast<int>(hit.size())) / bars;
    }
    return {100.0 * sum / static_cast<double>(s.tracks.size()), false};
}

/// Population standard deviation of the per-instrument pitch-class
/// entropies; instruments without notes are left out.
inline MetricValue inter_instrument_similarity(const CanonicalSong& s) {
    std::vector<double> h;
    for (const auto& t : s.tracks) {
        if (t.notes.empty()) continue;
        std::vector<const Note*> notes;
        for (const auto& n : t.notes) notes.push_back(&n);
        h.push_back(detail::entropy_bits(detail::pitch_class_histogram(notes)));
    }
    if (h.size() < 2) return {0.0, true};
    double mean = 0;
    for (double v : h) mean += v;
    mean /= static_cast<double>(h.size());
    double var = 0;
    for (double v : h) var += (v - mean) * (v - mean);
    return {std::sqrt(var / static_cast<double>(h.size())), false};
}

/// Pearson correlation of per-series values. A constant series gives 1 when
/// both series are identical and 0 otherwise, flagged either way.
inline MetricValue pearson(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    std::vector<int> x(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n)),
        y(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n));
    auto constant = [](const std::vector<int>& v) {
        return std::all_of(v.begin(), v.end(), [&](int e) { return e == v.front(); });
    };
    if (constant(x) || constant(y)) return {x == y ? 1.0 : 0.0, true};
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

/// Correlation of per-bar instrument counts over the bars of the shorter song.
inline MetricValue instrument_consistency(const CanonicalSong& generated, const CanonicalSong& reference) {
    const int bars = std::min(detail::bar_count(generated), detail::bar_count(reference));
    return pearson(detail::instruments_per_bar(generated, bars), detail::instruments_per_bar(reference, bars));
}

// ---------------------------------------------------------------------------
// Corpus evaluation

struct SongMetrics {
    std::array<double, kNumMetrics> values{};
    std::array<bool, kNumMetrics> flags{};
};

inline SongMetrics song_metrics(const CanonicalSong& s, const CanonicalSong& reference) {
    std::array<MetricValue, kNumMetrics> m = {pitch_class_entropy(s),        scale_consistency(s),
                                              groove_consistency(s),         empty_measure_rate(s),
                                              inter_instrument_similarity(s), instrument_consistency(s, reference)};
    SongMetrics out;
    for (int i = 0; i < kNumMetrics; ++i) {
        out.values[i] = m[i].value;
        out.flags[i] = m[i].flagged;
    }
    return out;
}

struct NamedSong {
    std::string name;
    CanonicalSong song;
};

struct SongDetail {
    std::string set;  // "ground_truth" or the model label
    std::string name;
    SongMetrics metrics;
};

struct MetricsRow {
    std::string label;
    std::array<double, kNumMetrics> mean{};
};

struct MetricsReport {
    MetricsRow ground_truth;
    MetricsRow generated;
    std::vector<SongDetail> details;
};

/// Pairs generated and reference songs by name (1:1). The ground-truth row
/// compares each reference with itself.
inline MetricsReport evaluate_corpus(const std::vector<NamedSong>& generated, const std::vector<NamedSong>& reference,
                                     const std::string& label = "generated") {
    if (generated.empty() || generated.size() != reference.size())
        fail(Errc::PairingMismatch, std::to_string(generated.size()) + " generated songs against " +
                                        std::to_string(reference.size()) + " references");
    std::map<std::string, const CanonicalSong*> refs;
    for (const auto& r : reference)
        if (!refs.emplace(r.name, &r.song).second) fail(Errc::PairingMismatch, "duplicate reference " + r.name);
    std::set<std::string> seen;
    MetricsReport rep;
    rep.ground_truth.label = "ground_truth";
    rep.generated.label = label;
    for (const auto& r : reference) {
        auto m = song_metrics(r.song, r.song);
        rep.details.push_back({"ground_truth", r.name, m});
        for (int i = 0; i < kNumMetrics; ++i) rep.ground_truth.mean[i] += m.values[i];
    }
    for (const auto& g : generated) {
        auto it = refs.find(g.name);
        if (it == refs.end()) fail(Errc::PairingMismatch, "no reference for " + g.name);
        if (!seen.insert(g.name).second) fail(Errc::PairingMismatch, "duplicate generated song " + g.name);
        auto m = song_metrics(g.song, *it->second);
        rep.details.push_back({label, g.name, m});
        for (int i = 0; i < kNumMetrics; ++i) rep.generated.mean[i] += m.values[i];
    }
    for (int i = 0; i < kNumMetrics; ++i) {
        rep.ground_truth.mean[i] /= static_cast<double>(reference.size());
        rep.generated.mean[i] /= static_cast<double>(generated.size());
    }
    return rep;
}

namespace detail {
inline std::string num(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}
}  // namespace detail

/// Machine-readable table: one row per model, metric columns in report order.
inline std::string report_csv(const MetricsReport& r) {
    std::string out = "model";
    for (auto n : kMetricNames) out += "," + std::string(n);
    out += "\n";
    for (const MetricsRow* row : {&r.ground_truth, &r.generated}) {
        out += row->label;
        for (double v : row->mean) out += "," + detail::num(v);
        out += "\n";
    }
    return out;
}

inline std::string details_csv(const MetricsReport& r) {
    std::string out = "set,song";
    for (auto n : kMetricNames) out += "," + std::string(n);
    out += ",flags\n";
    for (const auto& d : r.details) {
        out += d.set + "," + d.name;
        for (double v : d.metrics.values) out += "," + detail::num(v);
        std::string flags;
        for (int i = 0; i < kNumMetrics; ++i)
            if (d.metrics.flags[i]) flags += (flags.empty() ? "" : ";") + std::string(kMetricNames[i]);
        out += "," + flags + "\n";
    }
    return out;
}

inline std::string report_table(const MetricsReport& r) {
    constexpr std::array<std::string_view, kNumMetrics> heads = {"PCE", "SC(%)", "GC(%)", "EMR(%)", "IIS", "IC"};
    std::size_t w0 = std::max<std::size_t>({12, r.ground_truth.label.size(), r.generated.label.size()}) + 2;
    std::ostringstream o;
    o << std::left << std::setw(static_cast<int>(w0)) << "model";
    for (auto h : heads) o << std::right << std::setw(10) << h;
    o << "\n" << std::fixed << std::setprecision(3);
    for (const MetricsRow* row : {&r.ground_truth, &r.generated}) {
        o << std::left << std::setw(static_cast<int>(w0)) << row->label;
        for (double v : row->mean) o << std::right << std::setw(10) << v;
        o << "\n";
    }
    return o.str();
}

}  // namespace msat
