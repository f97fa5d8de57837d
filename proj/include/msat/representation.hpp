#pragma once

// Six-token event tuples and the note/bar/track serializations.

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "msat/error.hpp"
#include "msat/song.hpp"
#include "msat/vocab.hpp"

namespace msat {

struct Event {
    std::array<int, kNumFields> codes{};

    int operator[](Field f) const { return codes[static_cast<int>(f)]; }
    int& operator[](Field f) { return codes[static_cast<int>(f)]; }
    EventType type() const { return static_cast<EventType>(codes[0]); }

    auto operator<=>(const Event&) const = default;

    static Event structural(EventType t) { return Event{{static_cast<int>(t), 0, 0, 0, 0, 0}}; }
    static Event sos() { return structural(EventType::sos); }
    static Event son() { return structural(EventType::son); }
    static Event eos() { return structural(EventType::eos); }
    static Event instrument(int program) {
        return Event{{static_cast<int>(EventType::instrument), 0, 0, 0, 0, Vocabulary::instrument_code(program)}};
    }
    static Event note(int program, const Note& n) {
        return Event{{static_cast<int>(EventType::note), Vocabulary::beat_code(n.beat),
                      Vocabulary::position_code(n.position), Vocabulary::pitch_code(n.pitch),
                      Vocabulary::duration_code(n.duration), Vocabulary::instrument_code(program)}};
    }
};

/// NULL in every non-type field for SOS/SON/EOS, NULL except the instrument
/// for INSTRUMENT, non-NULL in-range codes everywhere for NOTE.
inline bool well_formed(const Event& e) {
    for (Field f : kFields)
        if (!Vocabulary::in_range(f, e[f])) return false;
    switch (e.type()) {
        case EventType::sos:
        case EventType::son:
        case EventType::eos:
            return std::all_of(e.codes.begin() + 1, e.codes.end(), [](int c) { return c == kNullCode; });
        case EventType::instrument:
            return std::all_of(e.codes.begin() + 1, e.codes.end() - 1, [](int c) { return c == kNullCode; }) &&
                   e[Field::instrument] != kNullCode;
        case EventType::note:
            return std::none_of(e.codes.begin() + 1, e.codes.end(), [](int c) { return c == kNullCode; });
    }
    return false;
}

/// Header (SOS, INSTRUMENT per track ascending, SON), NOTE events in
/// note-scale order, then EOS. Prefixes used during generation may omit EOS.
struct EventList {
    std::vector<Event> events;

    bool operator==(const EventList&) const = default;
};

enum class Scale : int { note = 0, bar = 1, track = 2 };

inline constexpr std::array<Scale, 3> kScales = {Scale::note, Scale::bar, Scale::track};

constexpr std::string_view scale_name(Scale s) {
    constexpr std::array<std::string_view, 3> names = {"note", "bar", "track"};
    return names[static_cast<int>(s)];
}

inline Scale parse_scale(std::string_view s) {
    for (Scale sc : kScales)
        if (scale_name(sc) == s) return sc;
    fail(Errc::Config, "unknown scale '" + std::string(s) + "'");
}

/// Sort key of a NOTE event for the given scale. Codes are monotone in the
/// values they encode, so comparing codes compares values.
inline std::array<int, 6> scale_key(const Event& e, Scale s) {
    const int beat = e[Field::beat], pos = e[Field::position], pitch = e[Field::pitch];
    const int dur = e[Field::duration], inst = e[Field::instrument];
    switch (s) {
        case Scale::note: return {beat, pos, inst, pitch, dur, 0};
        case Scale::bar: return {(beat - 1) / kBeatsPerBar, inst, beat, pos, pitch, dur};
        case Scale::track: return {inst, beat, pos, pitch, dur, 0};
    }
    return {};
}

struct ScaledSequence {
    Scale scale = Scale::note;
    std::vector<Event> events;
    std::vector<int> alignment;  // position in this sequence -> index in the source EventList
};

namespace detail {

struct Frame {
    std::size_t son = 0;  // index of SON
    std::size_t notes_end = 0;
    bool has_eos = false;
};

inline Frame check_frame(std::span<const Event> ev) {
    if (ev.empty() || ev[0].type() != EventType::sos)
        fail(Errc::MalformedSequence, "sequence must start with SOS");
    Frame f;
    std::size_t i = 1;
    while (i < ev.size() && ev[i].type() == EventType::instrument) ++i;
    if (i == ev.size() || ev[i].type() != EventType::son)
        fail(Errc::MalformedSequence, "expected SON after the instrument header at index " + std::to_string(i));
    f.son = i++;
    while (i < ev.size() && ev[i].type() == EventType::note) ++i;
    f.notes_end = i;
    if (i < ev.size()) {
        if (ev[i].type() != EventType::eos || i + 1 != ev.size())
            fail(Errc::MalformedSequence, "unexpected event after notes at index " + std::to_string(i));
        f.has_eos = true;
    }
    return f;
}

}  // namespace detail

inline EventList encode(const CanonicalSong& song) {
    EventList out;
    out.events.push_back(Event::sos());
    for (const auto& t : song.tracks) out.events.push_back(Event::instrument(t.program));
    out.events.push_back(Event::son());
    std::size_t first_note = out.events.size();
    for (const auto& t : song.tracks)
        for (const auto& n : t.notes) out.events.push_back(Event::note(t.program, n));
    std::stable_sort(out.events.begin() + static_cast<std::ptrdiff_t>(first_note), out.events.end(),
                     [](const Event& a, const Event& b) { return scale_key(a, Scale::note) < scale_key(b, Scale::note); });
    out.events.push_back(Event::eos());
    return out;
}

/// Reorders the NOTE events of `ev` by the scale's total order; the frame
/// (header and optional EOS) stays in place.
inline ScaledSequence serialize(std::span<const Event> ev, Scale scale) {
    auto frame = detail::check_frame(ev);
    ScaledSequence out;
    out.scale = scale;
    out.alignment.resize(ev.size());
    std::iota(out.alignment.begin(), out.alignment.end(), 0);
    auto first = out.alignment.begin() + static_cast<std::ptrdiff_t>(frame.son + 1);
    auto last = out.alignment.begin() + static_cast<std::ptrdiff_t>(frame.notes_end);
    std::stable_sort(first, last, [&](int a, int b) { return scale_key(ev[a], scale) < scale_key(ev[b], scale); });
    out.events.reserve(ev.size());
    for (int idx : out.alignment) out.events.push_back(ev[idx]);
    return out;
}

inline ScaledSequence serialize(const EventList& ev, Scale scale) { return serialize(std::span(ev.events), scale); }

struct DecodeResult {
    CanonicalSong song;
    int dropped_notes = 0;
};

/// Inverse of serialize ∘ encode. NOTE events with an undeclared instrument
/// or a NULL field are dropped and counted. `require_eos = false` accepts
/// a generation prefix cut off before EOS.
inline DecodeResult deserialize(std::span<const Event> ev, bool require_eos = true) {
    auto frame = detail::check_frame(ev);
    if (require_eos && !frame.has_eos) fail(Errc::MalformedSequence, "sequence must end with EOS");
    DecodeResult out;
    for (std::size_t i = 1; i < frame.son; ++i) {
        if (!well_formed(ev[i])) fail(Errc::MalformedSequence, "malformed INSTRUMENT event");
        int program = Vocabulary::instrument_value(ev[i][Field::instrument]);
        bool seen = std::any_of(out.song.tracks.begin(), out.song.tracks.end(),
                                [&](const Track& t) { return t.program == program; });
        if (!seen) out.song.tracks.push_back({program, {}});
    }
    for (std::size_t i = frame.son + 1; i < frame.notes_end; ++i) {
        const Event& e = ev[i];
        if (!well_formed(e)) {
            ++out.dropped_notes;
            continue;
        }
        int program = Vocabulary::instrument_value(e[Field::instrument]);
        auto it = std::find_if(out.song.tracks.begin(), out.song.tracks.end(),
                               [&](const Track& t) { return t.program == program; });
        if (it == out.song.tracks.end()) {
            ++out.dropped_notes;
            continue;
        }
        it->notes.push_back({Vocabulary::beat_value(e[Field::beat]), Vocabulary::position_value(e[Field::position]),
                             Vocabulary::pitch_value(e[Field::pitch]), Vocabulary::duration_value(e[Field::duration])});
    }
    canonicalize(out.song);
    return out;
}

inline DecodeResult deserialize(const ScaledSequence& seq) { return deserialize(std::span(seq.events)); }

/// gather[j] = position in the source ordering of the event that sits at
/// position j of the target ordering.
inline std::vector<int> realign_index(std::span<const int> source_alignment, std::span<const int> target_alignment) {
    if (source_alignment.size() != target_alignment.size())
        fail(Errc::LengthMismatch, "alignments of length " + std::to_string(source_alignment.size()) + " and " +
                                       std::to_string(target_alignment.size()));
    const int n = static_cast<int>(source_alignment.size());
    std::vector<int> inverse(n, -1);
    for (int i = 0; i < n; ++i) {
        int c = source_alignment[i];
        if (c < 0 || c >= n || inverse[c] != -1) fail(Errc::LengthMismatch, "source alignment is not a permutation");
        inverse[c] = i;
    }
    std::vector<int> gather(n);
    for (int j = 0; j < n; ++j) {
        int c = target_alignment[j];
        if (c < 0 || c >= n) fail(Errc::LengthMismatch, "target alignment is not a permutation");
        gather[j] = inverse[c];
    }
    return gather;
}

/// Re-orders the rows of a per-position sequence (any matrix type with
/// rows() and row(i)) from the source ordering into the target ordering.
template <class Matrix>
Matrix realign(const Matrix& h, std::span<const int> source_alignment, std::span<const int> target_alignment) {
    if (static_cast<std::size_t>(h.rows()) != source_alignment.size())
        fail(Errc::LengthMismatch, "sequence has " + std::to_string(h.rows()) + " rows, alignment " +
                                       std::to_string(source_alignment.size()));
    auto gather = realign_index(source_alignment, target_alignment);
    Matrix out(h.rows(), h.cols());
    for (std::size_t j = 0; j < gather.size(); ++j) out.row(j) = h.row(gather[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Token files: a version header naming the scale, then one event per line as
// six space-separated codes.

inline constexpr std::string_view kTokenHeader = "msat-tokens 1 scale=";

inline std::string format_tokens(const ScaledSequence& seq) {
    std::string out;
    out += kTokenHeader;
    out += scale_name(seq.scale);
    out += '\n';
    for (const auto& e : seq.events) {
        for (int f = 0; f < kNumFields; ++f) {
            if (f) out += ' ';
            out += std::to_string(e.codes[f]);
        }
        out += '\n';
    }
    return out;
}

inline ScaledSequence parse_tokens(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kTokenHeader, 0) != 0)
        fail(Errc::Io, "token file lacks the msat-tokens header");
    ScaledSequence seq;
    seq.scale = parse_scale(line.substr(kTokenHeader.size()));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Event e;
        for (auto& c : e.codes)
            if (!(ls >> c)) fail(Errc::Io, "token line must hold six integers: '" + line + "'");
        std::string extra;
        if (ls >> extra) fail(Errc::Io, "token line must hold six integers: '" + line + "'");
        seq.events.push_back(e);
    }
    // Alignment of a stored sequence is relative to itself.
    seq.alignment.resize(seq.events.size());
    std::iota(seq.alignment.begin(), seq.alignment.end(), 0);
    return seq;
}

}  // namespace msat
