#pragma once

// Turning songs into teacher-forced training examples.

#include <algorithm>
#include <span>
#include <vector>

#include "msat/nn/model.hpp"
#include "msat/representation.hpp"

namespace msat {

/// Splits an encoded song at bar boundaries into event lists of at most
/// `max_len` events each (header included). Every piece repeats the header;
/// only the last piece ends with EOS. A bar too large for one piece is cut
/// to fit, dropping its latest notes in note order.
inline std::vector<EventList> segment_at_bars(const EventList& ev, int max_len) {
    auto frame_end = static_cast<std::size_t>(
        std::find_if(ev.events.begin(), ev.events.end(), [](const Event& e) { return e.type() == EventType::son; }) -
        ev.events.begin());
    if (frame_end == ev.events.size()) fail(Errc::MalformedSequence, "missing SON");
    std::vector<Event> header(ev.events.begin(), ev.events.begin() + static_cast<std::ptrdiff_t>(frame_end + 1));
    if (static_cast<int>(header.size()) + 1 > max_len) fail(Errc::ShapeMismatch, "instrument header exceeds max_len");
    if (static_cast<int>(ev.events.size()) <= max_len) return {ev};

    auto bar_of = [](const Event& e) { return Vocabulary::beat_value(e[Field::beat]) / kBeatsPerBar; };
    std::vector<std::vector<Event>> bars;
    int current = -1;
    for (std::size_t i = frame_end + 1; i < ev.events.size(); ++i) {
        const Event& e = ev.events[i];
        if (e.type() != EventType::note) continue;
        if (bar_of(e) != current) {
            bars.emplace_back();
            current = bar_of(e);
        }
        bars.back().push_back(e);
    }

    const std::size_t capacity = static_cast<std::size_t>(max_len) - header.size() - 1;  // one slot kept for EOS
    std::vector<EventList> out;
    EventList piece{header};
    std::size_t used = 0;
    for (auto& bar : bars) {
        if (bar.size() > capacity) bar.resize(capacity);
        if (used + bar.size() > capacity) {
            out.push_back(std::move(piece));
            piece = EventList{header};
            used = 0;
        }
        piece.events.insert(piece.events.end(), bar.begin(), bar.end());
        used += bar.size();
    }
    piece.events.push_back(Event::eos());
    out.push_back(std::move(piece));
    return out;
}

/// Builds the teacher-forced example for one event list: the sequence in
/// target order is the source of targets; its first T events form the
/// input set, serialized afresh in each scale's order.
inline nn::Example make_example(const EventList& ev, Scale target) {
    ScaledSequence full = serialize(ev, target);
    if (full.events.size() < 2) fail(Errc::ShapeMismatch, "sequence too short for next-event training");
    std::vector<Event> input_set(full.events.begin(), full.events.end() - 1);
    nn::Example ex;
    ex.target = target;
    ex.targets.assign(full.events.begin() + 1, full.events.end());
    ScaledSequence target_seq = serialize(input_set, target);
    for (Scale s : kScales) {
        ScaledSequence seq = serialize(input_set, s);
        ex.gather[static_cast<int>(s)] = realign_index(seq.alignment, target_seq.alignment);
        ex.inputs[static_cast<int>(s)] = std::move(seq.events);
    }
    return ex;
}

/// Realigned inputs of every scale agree with the target-order inputs
/// event for event.
inline bool targets_aligned(const nn::Example& ex) {
    const auto& ref = ex.inputs[static_cast<int>(ex.target)];
    for (Scale s : kScales) {
        const int si = static_cast<int>(s);
        if (ex.inputs[si].size() != ref.size()) return false;
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (ex.inputs[si][ex.gather[si][j]] != ref[ex.gather[static_cast<int>(ex.target)][j]]) return false;
    }
    return true;
}

inline std::vector<nn::Example> make_examples(const CanonicalSong& song, Scale target, int max_len) {
    std::vector<nn::Example> out;
    for (const auto& piece : segment_at_bars(encode(song), max_len + 1)) out.push_back(make_example(piece, target));
    return out;
}

}  // namespace msat
