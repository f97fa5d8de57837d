#pragma once

// Shared generators and fixtures for the test suites.

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "msat/rng.hpp"
#include "msat/song.hpp"

namespace msat::test_support {

inline std::filesystem::path data_dir() { return std::filesystem::path(MSAT_TEST_DATA_DIR); }

struct SongGenOptions {
    int max_tracks = 4;
    int max_notes_per_track = 30;
    int max_beats = 64;
    bool allow_empty_tracks = false;
};

/// Random song satisfying every CanonicalSong invariant. Durations are drawn
/// from the representable table.
inline CanonicalSong random_song(Rng& rng, const SongGenOptions& opts = {}) {
    CanonicalSong s;
    int n_tracks = 1 + static_cast<int>(rng.index(opts.max_tracks));
    std::set<int> programs;
    while (static_cast<int>(programs.size()) < n_tracks) programs.insert(static_cast<int>(rng.index(kNumPrograms)));
    for (int p : programs) {
        Track t{p, {}};
        int n = static_cast<int>(rng.index(opts.max_notes_per_track + 1));
        if (!opts.allow_empty_tracks && n == 0) n = 1;
        for (int i = 0; i < n; ++i) {
            Note note;
            note.beat = static_cast<int>(rng.index(opts.max_beats));
            note.position = static_cast<int>(rng.index(kResolution));
            note.pitch = 24 + static_cast<int>(rng.index(72));
            note.duration = kDurationTable[rng.index(40)];
            t.notes.push_back(note);
        }
        s.tracks.push_back(std::move(t));
    }
    canonicalize(s);
    return s;
}

/// Two tracks: A = program 0 with notes at beats 0, 1, 4; B = program 33
/// with notes at beats 0, 4; all at position 0.
inline CanonicalSong five_note_song() {
    CanonicalSong s;
    s.tracks.push_back({0, {{0, 0, 60, 12}, {1, 0, 62, 12}, {4, 0, 64, 12}}});
    s.tracks.push_back({33, {{0, 0, 36, 24}, {4, 0, 38, 24}}});
    canonicalize(s);
    return s;
}

/// Four bars of melody (program 0) over a bass line (program 33).
inline CanonicalSong toy_song(int bars = 4) {
    CanonicalSong s;
    Track melody{0, {}}, bass{33, {}};
    const int tune[8] = {60, 62, 64, 65, 67, 65, 64, 62};
    for (int b = 0; b < bars; ++b) {
        for (int k = 0; k < 4; ++k) melody.notes.push_back({4 * b + k, (k % 2) * 6, tune[(2 * b + k) % 8], 12});
        bass.notes.push_back({4 * b, 0, 36 + 5 * (b % 2), 48});
    }
    s.tracks = {melody, bass};
    canonicalize(s);
    return s;
}

}  // namespace msat::test_support
