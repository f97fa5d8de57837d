#pragma once

// MIDI → CanonicalSong normalization and corpus splitting.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string_view>
#include <variant>
#include <vector>

#include "msat/midi.hpp"
#include "msat/rng.hpp"
#include "msat/song.hpp"

namespace msat {

enum class Rejection { NonCommonTime, NoPitchedNotes };

constexpr std::string_view rejection_name(Rejection r) {
    return r == Rejection::NonCommonTime ? "NonCommonTime" : "NoPitchedNotes";
}

struct NormalizeOptions {
    int max_beats = kMaxBeats;
    int max_duration = kMaxDuration;
};

using NormalizeResult = std::variant<CanonicalSong, Rejection>;

/// Nearest grid position for a tick, halves rounded up.
inline std::int64_t quantize_tick(std::int64_t tick, int division) {
    return (2 * kResolution * tick + division) / (2 * static_cast<std::int64_t>(division));
}

inline NormalizeResult normalize(const midi::RawMidi& raw, const NormalizeOptions& opts = {}) {
    for (const auto& t : raw.tracks)
        for (const auto& e : t.events)
            if (e.kind == midi::EventKind::time_signature && !(e.data1 == 4 && e.data2 == 2))
                return Rejection::NonCommonTime;

    std::map<int, Track> by_program;
    for (const auto& n : raw.notes) {
        if (n.channel == midi::kDrumChannel) continue;
        std::int64_t on = quantize_tick(n.on, raw.division);
        std::int64_t off = quantize_tick(n.off, raw.division);
        std::int64_t beat = on / kResolution;
        if (beat >= opts.max_beats) continue;
        auto dur = static_cast<int>(std::clamp<std::int64_t>(off - on, 1, opts.max_duration));
        auto& track = by_program[n.program];
        track.program = n.program;
        track.notes.push_back({static_cast<int>(beat), static_cast<int>(on % kResolution), n.pitch, snap_duration(dur)});
    }
    if (by_program.empty()) return Rejection::NoPitchedNotes;

    CanonicalSong song;
    for (auto& [program, track] : by_program) song.tracks.push_back(std::move(track));
    canonicalize(song);
    return song;
}

template <class T>
struct CorpusSplit {
    std::vector<T> train, valid, test;
};

/// Seeded shuffle, then 80/10/10 by count: valid and test get floor(n/10)
/// each and train keeps the remainder.
template <class T>
CorpusSplit<T> split_corpus(std::vector<T> items, std::uint64_t seed) {
    if (items.size() < 10) fail(Errc::TooFewSongs, "split needs at least 10 songs, got " + std::to_string(items.size()));
    Rng rng(seed);
    std::shuffle(items.begin(), items.end(), rng.engine());
    std::size_t n_hold = items.size() / 10;
    std::size_t n_train = items.size() - 2 * n_hold;
    CorpusSplit<T> out;
    out.train.assign(std::make_move_iterator(items.begin()), std::make_move_iterator(items.begin() + n_train));
    out.valid.assign(std::make_move_iterator(items.begin() + n_train),
                     std::make_move_iterator(items.begin() + n_train + n_hold));
    out.test.assign(std::make_move_iterator(items.begin() + n_train + n_hold), std::make_move_iterator(items.end()));
    return out;
}

}  // namespace msat
