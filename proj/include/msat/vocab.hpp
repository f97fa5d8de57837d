#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string_view>

#include "msat/error.hpp"

namespace msat {

/// The six fields of an event tuple, in tuple order.
enum class Field : int { type = 0, beat, position, pitch, duration, instrument };

inline constexpr int kNumFields = 6;
inline constexpr std::array<Field, kNumFields> kFields = {Field::type,  Field::beat,     Field::position,
                                                          Field::pitch, Field::duration, Field::instrument};

constexpr std::string_view field_name(Field f) {
    constexpr std::array<std::string_view, kNumFields> names = {"type",  "beat",     "position",
                                                                "pitch", "duration", "instrument"};
    return names[static_cast<int>(f)];
}

enum class EventType : int { sos = 0, instrument = 1, son = 2, note = 3, eos = 4 };

inline constexpr int kResolution = 12;       // positions per beat
inline constexpr int kBeatsPerBar = 4;       // 4/4 only
inline constexpr int kMaxBeats = 256;
inline constexpr int kMaxDuration = 384;     // positions, 8 bars
inline constexpr int kNumDurations = 64;
inline constexpr int kNumPrograms = 128;
inline constexpr int kNumPitches = 128;
inline constexpr int kNullCode = 0;

namespace detail {
constexpr std::array<int, kNumDurations> make_duration_table() {
    std::array<int, kNumDurations> t{};
    int i = 0;
    for (int v = 1; v <= 24; ++v) t[i++] = v;
    for (int v = 26; v <= 48; v += 2) t[i++] = v;
    for (int v = 52; v <= 96; v += 4) t[i++] = v;
    for (int v = 104; v <= 192; v += 8) t[i++] = v;
    for (int v : {224, 256, 320, 384}) t[i++] = v;
    return t;
}
}  // namespace detail

/// Strictly increasing table of representable durations (in positions).
inline constexpr std::array<int, kNumDurations> kDurationTable = detail::make_duration_table();

static_assert(kDurationTable.front() == 1 && kDurationTable.back() == kMaxDuration);

/// Index of the nearest table entry; ties go to the shorter entry.
inline int duration_index(int positions) {
    positions = std::clamp(positions, 1, kMaxDuration);
    auto it = std::lower_bound(kDurationTable.begin(), kDurationTable.end(), positions);
    int hi = static_cast<int>(it - kDurationTable.begin());
    if (*it == positions || hi == 0) return hi;
    int lo = hi - 1;
    return (positions - kDurationTable[lo] <= kDurationTable[hi] - positions) ? lo : hi;
}

inline int snap_duration(int positions) { return kDurationTable[duration_index(positions)]; }

/// Code ranges per field. Non-type fields reserve code 0 as NULL and map
/// value v to code v + 1 (durations map their table index + 1).
struct Vocabulary {
    static constexpr std::array<int, kNumFields> sizes = {
        5,                  // SOS, INSTRUMENT, SON, NOTE, EOS
        kMaxBeats + 1,      // NULL + beats 0..255
        kResolution + 1,    // NULL + positions 0..11
        kNumPitches + 1,    // NULL + pitches 0..127
        kNumDurations + 1,  // NULL + 64 table entries
        kNumPrograms + 1,   // NULL + programs 0..127
    };

    static constexpr int size(Field f) { return sizes[static_cast<int>(f)]; }

    static constexpr int total() {
        int s = 0;
        for (int v : sizes) s += v;
        return s;
    }

    static int beat_code(int beat) {
        if (beat < 0 || beat >= kMaxBeats) fail(Errc::VocabularyOverflow, "beat " + std::to_string(beat));
        return beat + 1;
    }
    static int position_code(int pos) {
        if (pos < 0 || pos >= kResolution) fail(Errc::VocabularyOverflow, "position " + std::to_string(pos));
        return pos + 1;
    }
    static int pitch_code(int pitch) {
        if (pitch < 0 || pitch >= kNumPitches) fail(Errc::VocabularyOverflow, "pitch " + std::to_string(pitch));
        return pitch + 1;
    }
    static int duration_code(int positions) { return duration_index(positions) + 1; }
    static int instrument_code(int program) {
        if (program < 0 || program >= kNumPrograms)
            fail(Errc::VocabularyOverflow, "program " + std::to_string(program));
        return program + 1;
    }

    // Decoders assume a non-NULL, in-range code.
    static int beat_value(int code) { return code - 1; }
    static int position_value(int code) { return code - 1; }
    static int pitch_value(int code) { return code - 1; }
    static int duration_value(int code) { return kDurationTable[code - 1]; }
    static int instrument_value(int code) { return code - 1; }

    static bool in_range(Field f, int code) { return code >= 0 && code < size(f); }
};

}  // namespace msat
