#pragma once

// Standard MIDI File reading and writing (formats 0 and 1, tick division).

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msat/error.hpp"
#include "msat/song.hpp"

namespace msat::midi {

enum class EventKind { note_on, note_off, program_change, time_signature, tempo };

struct Event {
    std::int64_t tick = 0;  // absolute
    EventKind kind = EventKind::note_on;
    int channel = 0;
    int data1 = 0;  // pitch | program | numerator | tempo (us per quarter)
    int data2 = 0;  // velocity | denominator as a power of two
};

struct RawTrack {
    std::vector<Event> events;  // file order, ticks non-decreasing
};

struct MatchedNote {
    int track = 0;
    int channel = 0;
    int program = 0;
    int pitch = 0;
    int velocity = 0;
    std::int64_t on = 0;
    std::int64_t off = 0;

    auto operator<=>(const MatchedNote&) const = default;
};

struct RawMidi {
    int format = 1;
    int division = 480;  // ticks per quarter note
    std::vector<RawTrack> tracks;
    std::vector<MatchedNote> notes;
    int unmatched_note_ons = 0;
};

inline constexpr int kDrumChannel = 9;

namespace detail {

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    bool done() const { return pos_ >= bytes_.size(); }

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint8_t peek() {
        need(1);
        return bytes_[pos_];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = (std::uint32_t(bytes_[pos_]) << 24) | (std::uint32_t(bytes_[pos_ + 1]) << 16) |
                          (std::uint32_t(bytes_[pos_ + 2]) << 8) | std::uint32_t(bytes_[pos_ + 3]);
        pos_ += 4;
        return v;
    }
    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t b = u8();
            v = (v << 7) | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        fail(Errc::VlqOverflow, "variable-length quantity longer than 4 bytes at offset " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) fail(Errc::TruncatedChunk, "unexpected end of data at offset " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline RawTrack parse_track(std::span<const std::uint8_t> data) {
    Reader r(data);
    RawTrack track;
    std::int64_t tick = 0;
    std::uint8_t running = 0;
    while (!r.done()) {
        tick += r.vlq();
        std::uint8_t status = r.peek();
        if (status & 0x80) {
            r.u8();
        } else {
            if (running == 0) fail(Errc::TruncatedChunk, "data byte without running status");
            status = running;
        }

        if (status == 0xFF) {
            std::uint8_t type = r.u8();
            auto payload = r.take(r.vlq());
            if (type == 0x2F) break;
            if (type == 0x51 && payload.size() >= 3) {
                int us = (payload[0] << 16) | (payload[1] << 8) | payload[2];
                track.events.push_back({tick, EventKind::tempo, 0, us, 0});
            } else if (type == 0x58 && payload.size() >= 2) {
                track.events.push_back({tick, EventKind::time_signature, 0, payload[0], payload[1]});
            }
            continue;
        }
        if (status == 0xF0 || status == 0xF7) {
            r.take(r.vlq());
            continue;
        }
        if (status >= 0xF0) fail(Errc::TruncatedChunk, "unexpected system message in track data");

        running = status;
        int channel = status & 0x0F;
        switch (status & 0xF0) {
            case 0x80: {
                int pitch = r.u8() & 0x7F;
                int vel = r.u8() & 0x7F;
                track.events.push_back({tick, EventKind::note_off, channel, pitch, vel});
                break;
            }
            case 0x90: {
                int pitch = r.u8() & 0x7F;
                int vel = r.u8() & 0x7F;
                track.events.push_back({tick, vel == 0 ? EventKind::note_off : EventKind::note_on, channel, pitch, vel});
                break;
            }
            case 0xC0:
                track.events.push_back({tick, EventKind::program_change, channel, r.u8() & 0x7F, 0});
                break;
            case 0xD0:
                r.u8();
                break;
            default:  // 0xA0 aftertouch, 0xB0 control change, 0xE0 pitch bend
                r.u8();
                r.u8();
                break;
        }
    }
    return track;
}

}  // namespace detail

/// Pairs note-ons with note-offs per (track, channel, pitch), first-in
/// first-out. Programs are tracked per (track, channel), starting at 0.
inline void match_notes(RawMidi& raw) {
    raw.notes.clear();
    raw.unmatched_note_ons = 0;
    for (std::size_t ti = 0; ti < raw.tracks.size(); ++ti) {
        std::array<int, 16> program{};
        std::map<std::pair<int, int>, std::deque<MatchedNote>> open;
        for (const auto& e : raw.tracks[ti].events) {
            switch (e.kind) {
                case EventKind::program_change: program[e.channel] = e.data1; break;
                case EventKind::note_on:
                    open[{e.channel, e.data1}].push_back(
                        {static_cast<int>(ti), e.channel, program[e.channel], e.data1, e.data2, e.tick, e.tick});
                    break;
                case EventKind::note_off: {
                    auto it = open.find({e.channel, e.data1});
                    if (it == open.end() || it->second.empty()) break;
                    MatchedNote n = it->second.front();
                    it->second.pop_front();
                    n.off = e.tick;
                    raw.notes.push_back(n);
                    break;
                }
                default: break;
            }
        }
        for (const auto& [key, q] : open) raw.unmatched_note_ons += static_cast<int>(q.size());
    }
    std::stable_sort(raw.notes.begin(), raw.notes.end(), [](const MatchedNote& a, const MatchedNote& b) {
        return std::tie(a.track, a.on) < std::tie(b.track, b.on);
    });
}

inline RawMidi parse_smf(std::span<const std::uint8_t> bytes) {
    detail::Reader r(bytes);
    if (r.remaining() < 14) fail(Errc::MalformedHeader, "file shorter than a header chunk");
    auto tag = r.take(4);
    if (std::string(tag.begin(), tag.end()) != "MThd") fail(Errc::MalformedHeader, "missing MThd tag");
    std::uint32_t len = r.u32();
    if (len < 6) fail(Errc::MalformedHeader, "header length " + std::to_string(len));
    RawMidi raw;
    raw.format = r.u16();
    r.u16();  // declared track count; the chunks themselves are authoritative
    std::uint16_t division = r.u16();
    if (len > 6) {
        if (r.remaining() < len - 6) fail(Errc::TruncatedChunk, "header chunk");
        r.take(len - 6);
    }
    if (raw.format > 1) fail(Errc::MalformedHeader, "SMF format " + std::to_string(raw.format) + " unsupported");
    if (division & 0x8000) fail(Errc::SmpteDivisionUnsupported, "SMPTE time division");
    if (division == 0) fail(Errc::MalformedHeader, "zero ticks per quarter note");
    raw.division = division;

    while (r.remaining() >= 8) {
        auto ctag = r.take(4);
        std::uint32_t clen = r.u32();
        if (r.remaining() < clen) fail(Errc::TruncatedChunk, "chunk declares " + std::to_string(clen) + " bytes");
        auto body = r.take(clen);
        if (std::string(ctag.begin(), ctag.end()) == "MTrk") raw.tracks.push_back(detail::parse_track(body));
    }
    if (!r.done()) fail(Errc::TruncatedChunk, "trailing bytes after last chunk");
    match_notes(raw);
    return raw;
}

inline RawMidi read_smf(const std::filesystem::path& p) {
    auto text = read_text_file(p);
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    return parse_smf(bytes);
}

// ---------------------------------------------------------------------------
// Writing

namespace detail {
inline void put_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
}
inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = v & 0x7F;
    while (v >>= 7) buf[n++] = std::uint8_t((v & 0x7F) | 0x80);
    while (n) out.push_back(buf[--n]);
}
}  // namespace detail

/// Writes the tick events of every track verbatim (no running status).
inline std::vector<std::uint8_t> write_smf(const RawMidi& raw) {
    std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd'};
    detail::put_u32(out, 6);
    detail::put_u16(out, static_cast<std::uint32_t>(raw.format));
    detail::put_u16(out, static_cast<std::uint32_t>(raw.tracks.size()));
    detail::put_u16(out, static_cast<std::uint32_t>(raw.division));
    for (const auto& t : raw.tracks) {
        std::vector<std::uint8_t> body;
        std::int64_t last = 0;
        for (const auto& e : t.events) {
            if (e.tick < last) fail(Errc::Io, "track events out of tick order");
            detail::put_vlq(body, static_cast<std::uint32_t>(e.tick - last));
            last = e.tick;
            switch (e.kind) {
                case EventKind::note_on:
                    body.insert(body.end(), {std::uint8_t(0x90 | e.channel), std::uint8_t(e.data1), std::uint8_t(e.data2)});
                    break;
                case EventKind::note_off:
                    body.insert(body.end(), {std::uint8_t(0x80 | e.channel), std::uint8_t(e.data1), std::uint8_t(e.data2)});
                    break;
                case EventKind::program_change:
                    body.insert(body.end(), {std::uint8_t(0xC0 | e.channel), std::uint8_t(e.data1)});
                    break;
                case EventKind::time_signature:
                    body.insert(body.end(), {0xFF, 0x58, 0x04, std::uint8_t(e.data1), std::uint8_t(e.data2), 24, 8});
                    break;
                case EventKind::tempo:
                    body.insert(body.end(), {0xFF, 0x51, 0x03, std::uint8_t(e.data1 >> 16), std::uint8_t(e.data1 >> 8),
                                             std::uint8_t(e.data1)});
                    break;
            }
        }
        body.insert(body.end(), {0x00, 0xFF, 0x2F, 0x00});
        out.insert(out.end(), {'M', 'T', 'r', 'k'});
        detail::put_u32(out, static_cast<std::uint32_t>(body.size()));
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

inline void save_smf(const std::filesystem::path& p, const RawMidi& raw) {
    auto bytes = write_smf(raw);
    write_text_file(p, std::string(bytes.begin(), bytes.end()));
}

/// Renders a song as tick events: 4/4 at 120 BPM, velocity 64. Format 0 when
/// every program fits on its own non-drum channel, format 1 (one track per
/// program) otherwise or when requested.
inline RawMidi song_to_raw(const CanonicalSong& song, int division = 480, bool force_format1 = false) {
    constexpr int kVelocity = 64;
    constexpr int kTempo = 500000;
    RawMidi raw;
    raw.division = division;
    bool format0 = !force_format1 && song.tracks.size() <= 15;
    raw.format = format0 ? 0 : 1;
    auto ticks = [&](std::int64_t positions) { return positions * division / kResolution; };

    RawTrack conductor;
    conductor.events.push_back({0, EventKind::tempo, 0, kTempo, 0});
    conductor.events.push_back({0, EventKind::time_signature, 0, 4, 2});

    struct Tagged {
        Event e;
        int rank;
    };
    std::vector<std::vector<Tagged>> per_track;
    for (std::size_t i = 0; i < song.tracks.size(); ++i) {
        const auto& t = song.tracks[i];
        int ch = static_cast<int>(i % 15);
        if (ch >= kDrumChannel) ++ch;
        std::vector<Tagged> ev;
        ev.push_back({{0, EventKind::program_change, ch, t.program, 0}, 0});
        for (const auto& n : t.notes) {
            std::int64_t on = ticks(n.onset());
            ev.push_back({{on, EventKind::note_on, ch, n.pitch, kVelocity}, 2});
            ev.push_back({{on + ticks(n.duration), EventKind::note_off, ch, n.pitch, 0}, 1});
            int ti = format0 ? 0 : static_cast<int>(i) + 1;
            raw.notes.push_back({ti, ch, t.program, n.pitch, kVelocity, on, on + ticks(n.duration)});
        }
        per_track.push_back(std::move(ev));
    }

    auto finish = [](std::vector<Tagged>& ev) {
        std::stable_sort(ev.begin(), ev.end(), [](const Tagged& a, const Tagged& b) {
            return std::tie(a.e.tick, a.rank) < std::tie(b.e.tick, b.rank);
        });
        RawTrack t;
        for (auto& x : ev) t.events.push_back(x.e);
        return t;
    };

    if (format0) {
        std::vector<Tagged> all;
        for (auto& e : conductor.events) all.push_back({e, 0});
        for (auto& ev : per_track) all.insert(all.end(), ev.begin(), ev.end());
        raw.tracks.push_back(finish(all));
    } else {
        raw.tracks.push_back(conductor);
        for (auto& ev : per_track) raw.tracks.push_back(finish(ev));
    }
    std::stable_sort(raw.notes.begin(), raw.notes.end(), [](const MatchedNote& a, const MatchedNote& b) {
        return std::tie(a.track, a.on) < std::tie(b.track, b.on);
    });
    return raw;
}

}  // namespace msat::midi
