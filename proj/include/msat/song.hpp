#pragma once

#include <algorithm>
#include <compare>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "msat/error.hpp"
#include "msat/vocab.hpp"

namespace msat {

struct Note {
    int beat = 0;
    int position = 0;
    int pitch = 0;
    int duration = 1;  // positions

    auto operator<=>(const Note&) const = default;

    int onset() const { return beat * kResolution + position; }
    int bar() const { return beat / kBeatsPerBar; }
};

struct Track {
    int program = 0;
    std::vector<Note> notes;  // sorted by (beat, position, pitch), unique on that triple

    bool operator==(const Track&) const = default;
};

/// Quantized, tempo-free multi-track song. Every serialization starts here.
struct CanonicalSong {
    int resolution = kResolution;
    int length_beats = 0;
    std::vector<Track> tracks;  // ascending program, one track per program

    bool operator==(const CanonicalSong&) const = default;

    std::size_t note_count() const {
        std::size_t n = 0;
        for (const auto& t : tracks) n += t.notes.size();
        return n;
    }

    /// Index of the last bar holding an onset, or -1 for a silent song.
    int last_bar() const {
        int b = -1;
        for (const auto& t : tracks)
            for (const auto& n : t.notes) b = std::max(b, n.bar());
        return b;
    }
};

/// Length rule shared by ingest and deserialization: whole bars covering the
/// last onset.
inline int bar_aligned_length(const CanonicalSong& s) { return (s.last_bar() + 1) * kBeatsPerBar; }

/// Restores the ordering and uniqueness invariants in place. Duplicate
/// (beat, position, pitch) entries within a track keep the longest duration;
/// tracks sharing a program are merged.
inline void canonicalize(CanonicalSong& s) {
    std::stable_sort(s.tracks.begin(), s.tracks.end(),
                     [](const Track& a, const Track& b) { return a.program < b.program; });
    std::vector<Track> merged;
    for (auto& t : s.tracks) {
        if (!merged.empty() && merged.back().program == t.program) {
            auto& dst = merged.back().notes;
            dst.insert(dst.end(), t.notes.begin(), t.notes.end());
        } else {
            merged.push_back(std::move(t));
        }
    }
    for (auto& t : merged) {
        auto key = [](const Note& n) { return std::tie(n.beat, n.position, n.pitch); };
        std::sort(t.notes.begin(), t.notes.end(), [&](const Note& a, const Note& b) {
            if (key(a) != key(b)) return key(a) < key(b);
            return a.duration > b.duration;
        });
        t.notes.erase(std::unique(t.notes.begin(), t.notes.end(),
                                  [&](const Note& a, const Note& b) { return key(a) == key(b); }),
                      t.notes.end());
    }
    s.tracks = std::move(merged);
    s.length_beats = bar_aligned_length(s);
}

/// Returns an empty string when the song satisfies every type invariant,
/// otherwise a description of the first violation.
inline std::string check_invariants(const CanonicalSong& s) {
    if (s.resolution != kResolution) return "resolution must be 12";
    if (s.length_beats < 0 || s.length_beats > kMaxBeats) return "length_beats out of range";
    for (std::size_t i = 0; i < s.tracks.size(); ++i) {
        const auto& t = s.tracks[i];
        if (t.program < 0 || t.program >= kNumPrograms) return "program out of range";
        if (i > 0 && s.tracks[i - 1].program >= t.program) return "tracks not strictly ascending by program";
        for (std::size_t j = 0; j < t.notes.size(); ++j) {
            const auto& n = t.notes[j];
            if (n.position < 0 || n.position >= kResolution) return "position out of range";
            if (n.beat < 0 || n.beat >= s.length_beats) return "beat out of range";
            if (n.pitch < 0 || n.pitch >= kNumPitches) return "pitch out of range";
            if (n.duration < 1 || n.duration > kMaxDuration) return "duration out of range";
            if (j > 0) {
                const auto& p = t.notes[j - 1];
                if (std::tie(p.beat, p.position, p.pitch) >= std::tie(n.beat, n.position, n.pitch))
                    return "notes not strictly sorted";
            }
        }
    }
    return {};
}

// ---------------------------------------------------------------------------
// JSON interchange. Integers only; notes are [beat, position, pitch, duration].

inline constexpr int kSongFormatVersion = 1;

inline nlohmann::json to_json(const CanonicalSong& s) {
    nlohmann::json j;
    j["format"] = "msat-song";
    j["version"] = kSongFormatVersion;
    j["resolution"] = s.resolution;
    j["length_beats"] = s.length_beats;
    j["tracks"] = nlohmann::json::array();
    for (const auto& t : s.tracks) {
        nlohmann::json notes = nlohmann::json::array();
        for (const auto& n : t.notes) notes.push_back({n.beat, n.position, n.pitch, n.duration});
        j["tracks"].push_back({{"program", t.program}, {"notes", std::move(notes)}});
    }
    return j;
}

inline CanonicalSong song_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "msat-song") fail(Errc::Io, "not an msat-song document");
        if (j.at("version").get<int>() != kSongFormatVersion) fail(Errc::Io, "unsupported song version");
        CanonicalSong s;
        s.resolution = j.at("resolution").get<int>();
        s.length_beats = j.at("length_beats").get<int>();
        for (const auto& jt : j.at("tracks")) {
            Track t;
            t.program = jt.at("program").get<int>();
            for (const auto& jn : jt.at("notes")) {
                if (!jn.is_array() || jn.size() != 4) fail(Errc::Io, "note must be a 4-integer array");
                t.notes.push_back({jn[0].get<int>(), jn[1].get<int>(), jn[2].get<int>(), jn[3].get<int>()});
            }
            s.tracks.push_back(std::move(t));
        }
        if (auto why = check_invariants(s); !why.empty()) fail(Errc::Io, "invalid song: " + why);
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::Io, std::string("song json: ") + e.what());
    }
}

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot write " + p.string());
    out << text;
}

inline CanonicalSong load_song(const std::filesystem::path& p) {
    try {
        return song_from_json(nlohmann::json::parse(read_text_file(p)));
    } catch (const nlohmann::json::parse_error& e) {
        fail(Errc::Io, p.string() + ": " + e.what());
    }
}

inline void save_song(const std::filesystem::path& p, const CanonicalSong& s) {
    write_text_file(p, to_json(s).dump(1) + "\n");
}

/// Regular files of a directory with one of the given extensions, sorted by name.
inline std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                                     std::initializer_list<std::string_view> exts) {
    if (!std::filesystem::is_directory(dir)) fail(Errc::Io, "not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace msat
