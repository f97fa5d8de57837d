#include <gtest/gtest.h>

#include <cstdlib>
#include <set>

#include "msat/ingest.hpp"
#include "test_util.hpp"

using namespace msat;

namespace {

midi::RawMidi raw_with_notes(int division, std::vector<midi::MatchedNote> notes) {
    midi::RawMidi raw;
    raw.division = division;
    raw.tracks.resize(1);
    raw.notes = std::move(notes);
    return raw;
}

// Brute force over candidate grid indices with exact integer comparisons of
// |n*division - 12*tick|; ties pick the larger n.
std::int64_t rational_nearest_position(std::int64_t tick, int division) {
    std::int64_t target = 12 * tick;  // position * division units
    std::int64_t best = 0;
    std::int64_t best_err = std::llabs(target);
    for (std::int64_t n = 1; n * division <= target + division; ++n) {
        std::int64_t err = std::llabs(n * division - target);
        if (err <= best_err) {
            best = n;
            best_err = err;
        }
    }
    return best;
}

}  // namespace

TEST(Normalize, DrumsOnlyRejected) {
    auto raw = midi::read_smf(test_support::data_dir() / "drums_only.mid");
    auto res = normalize(raw);
    ASSERT_TRUE(std::holds_alternative<Rejection>(res));
    EXPECT_EQ(std::get<Rejection>(res), Rejection::NoPitchedNotes);
}

TEST(Normalize, ThreeFourRejected) {
    auto raw = midi::read_smf(test_support::data_dir() / "waltz_34.mid");
    auto res = normalize(raw);
    ASSERT_TRUE(std::holds_alternative<Rejection>(res));
    EXPECT_EQ(std::get<Rejection>(res), Rejection::NonCommonTime);
}

TEST(Normalize, NoTimeSignatureDefaultsToCommonTime) {
    auto raw = raw_with_notes(96, {{0, 0, 0, 60, 90, 0, 96}});
    auto res = normalize(raw);
    ASSERT_TRUE(std::holds_alternative<CanonicalSong>(res));
}

TEST(Normalize, CommonTimeFixtureDropsDrumChannel) {
    auto res = normalize(midi::read_smf(test_support::data_dir() / "common_44.mid"));
    ASSERT_TRUE(std::holds_alternative<CanonicalSong>(res));
    const auto& s = std::get<CanonicalSong>(res);
    ASSERT_EQ(s.tracks.size(), 1u);
    EXPECT_EQ(s.tracks[0].notes, (std::vector<Note>{{0, 0, 60, 12}, {1, 0, 64, 12}}));
    EXPECT_EQ(s.length_beats, 4);
}

TEST(Normalize, Tick500AtDivision480) {
    // 500 ticks = 12.5 positions, rounded half up to 13 = beat 1, position 1.
    auto res = normalize(raw_with_notes(480, {{0, 0, 0, 60, 90, 500, 980}}));
    const auto& s = std::get<CanonicalSong>(res);
    EXPECT_EQ(s.tracks[0].notes[0].beat, 1);
    EXPECT_EQ(s.tracks[0].notes[0].position, 1);
}

TEST(Normalize, QuantizationMatchesRationalOracle) {
    Rng rng(2024);
    for (int division : {96, 120, 384, 480, 1000}) {
        std::vector<midi::MatchedNote> notes;
        for (int i = 0; i < 1000; ++i) {
            std::int64_t on = static_cast<std::int64_t>(rng.index(division * 200));
            // distinct pitches per index keep every note through dedup
            notes.push_back({0, i % 9, 0, i % 128, 90, on, on + 1 + static_cast<std::int64_t>(rng.index(division * 2))});
        }
        for (const auto& n : notes) {
            EXPECT_EQ(quantize_tick(n.on, division), rational_nearest_position(n.on, division)) << n.on;
            EXPECT_EQ(quantize_tick(n.off, division), rational_nearest_position(n.off, division)) << n.off;
        }
        auto song = std::get<CanonicalSong>(normalize(raw_with_notes(division, notes)));
        std::multiset<std::tuple<int, int, int>> expect, got;
        for (const auto& n : notes) {
            auto q = rational_nearest_position(n.on, division);
            expect.insert({static_cast<int>(q / 12), static_cast<int>(q % 12), n.pitch});
        }
        for (const auto& n : song.tracks[0].notes) got.insert({n.beat, n.position, n.pitch});
        std::set<std::tuple<int, int, int>> unique(expect.begin(), expect.end());
        EXPECT_EQ((std::multiset<std::tuple<int, int, int>>(unique.begin(), unique.end())), got);
    }
}

TEST(Normalize, ZeroLengthGetsDurationOne) {
    auto s = std::get<CanonicalSong>(normalize(raw_with_notes(480, {{0, 0, 0, 60, 90, 0, 10}})));
    EXPECT_EQ(s.tracks[0].notes[0].duration, 1);
}

TEST(Normalize, LongNotesClippedAndBeatsTruncated) {
    auto s = std::get<CanonicalSong>(normalize(raw_with_notes(
        12, {{0, 0, 0, 60, 90, 0, 12 * 1000}, {0, 0, 0, 62, 90, 12 * 300, 12 * 301}})));
    ASSERT_EQ(s.tracks[0].notes.size(), 1u);
    EXPECT_EQ(s.tracks[0].notes[0].duration, kMaxDuration);
    EXPECT_LE(s.length_beats, kMaxBeats);
}

TEST(Normalize, DuplicatesKeepLongestAndProgramsMerge) {
    auto s = std::get<CanonicalSong>(normalize(raw_with_notes(
        12, {{0, 0, 5, 60, 90, 0, 6}, {0, 3, 5, 60, 90, 0, 24}, {0, 4, 7, 61, 90, 0, 12}})));
    ASSERT_EQ(s.tracks.size(), 2u);
    EXPECT_EQ(s.tracks[0].program, 5);
    ASSERT_EQ(s.tracks[0].notes.size(), 1u);
    EXPECT_EQ(s.tracks[0].notes[0].duration, 24);
}

TEST(Normalize, IdempotentOnOwnOutput) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = test_support::random_song(rng);
        EXPECT_EQ(check_invariants(s), "");
        for (int division : {96, 480}) {
            auto again = std::get<CanonicalSong>(normalize(midi::song_to_raw(s, division)));
            EXPECT_EQ(again, s);
            auto through_bytes = normalize(midi::parse_smf(midi::write_smf(midi::song_to_raw(s, division))));
            EXPECT_EQ(check_invariants(std::get<CanonicalSong>(through_bytes)), "");
        }
    }
}

TEST(SplitCorpus, Sizes) {
    std::vector<int> ten(10), twenty_three(23);
    std::iota(ten.begin(), ten.end(), 0);
    std::iota(twenty_three.begin(), twenty_three.end(), 0);
    auto a = split_corpus(ten, 1);
    EXPECT_EQ(a.train.size(), 8u);
    EXPECT_EQ(a.valid.size(), 1u);
    EXPECT_EQ(a.test.size(), 1u);
    auto b = split_corpus(twenty_three, 99);
    EXPECT_EQ(b.train.size(), 19u);
    EXPECT_EQ(b.valid.size(), 2u);
    EXPECT_EQ(b.test.size(), 2u);
}

TEST(SplitCorpus, DeterministicExactPartition) {
    std::vector<int> items(23);
    std::iota(items.begin(), items.end(), 0);
    auto a = split_corpus(items, 5);
    auto b = split_corpus(items, 5);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_EQ(a.test, b.test);
    std::vector<int> all;
    for (auto* part : {&a.train, &a.valid, &a.test}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, items);
}

TEST(SplitCorpus, TooFewSongs) {
    try {
        split_corpus(std::vector<int>(9), 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TooFewSongs);
    }
}
