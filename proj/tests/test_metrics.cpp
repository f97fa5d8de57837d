#include <gtest/gtest.h>

#include <cmath>

#include "msat/metrics.hpp"
#include "test_util.hpp"

using namespace msat;

namespace {

CanonicalSong song_of(std::vector<Track> tracks) {
    CanonicalSong s;
    s.tracks = std::move(tracks);
    canonicalize(s);
    return s;
}

// one instrument, one note per bar at the given beat offsets
CanonicalSong bars_with_counts(const std::vector<int>& counts) {
    std::vector<Track> tracks;
    for (int p = 0; p < 8; ++p) tracks.push_back({p, {}});
    for (std::size_t b = 0; b < counts.size(); ++b)
        for (int p = 0; p < counts[b]; ++p) tracks[p].notes.push_back({4 * static_cast<int>(b), 0, 60, 12});
    return song_of(tracks);
}

nlohmann::json oracle() { return nlohmann::json::parse(read_text_file(test_support::data_dir() / "metrics_oracle.json")); }

}  // namespace

TEST(PitchClassEntropy, Examples) {
    EXPECT_EQ(pitch_class_entropy(song_of({{0, {{0, 0, 48, 12}, {1, 0, 60, 12}, {2, 0, 72, 12}}}})).value, 0.0);
    std::vector<Note> all;
    for (int k = 0; k < 12; ++k) all.push_back({k, 0, 60 + k, 12});
    EXPECT_NEAR(pitch_class_entropy(song_of({{0, all}})).value, std::log2(12.0), 1e-12);
    auto ce = song_of({{0, {{0, 0, 60, 12}, {1, 0, 60, 12}, {2, 0, 72, 12}, {3, 0, 64, 12}}}});
    EXPECT_NEAR(pitch_class_entropy(ce).value, 0.8112781244591328, 1e-12);
    auto empty = pitch_class_entropy(CanonicalSong{});
    EXPECT_EQ(empty.value, 0.0);
    EXPECT_TRUE(empty.flagged);
}

TEST(ScaleConsistency, Examples) {
    auto cmaj = song_of({{0, {{0, 0, 60, 12}, {1, 0, 62, 12}, {2, 0, 64, 12}, {3, 0, 65, 12}, {4, 0, 71, 12}}}});
    EXPECT_EQ(scale_consistency(cmaj).value, 100.0);
    std::vector<Note> all;
    for (int k = 0; k < 12; ++k) all.push_back({k, 0, 60 + k, 12});
    EXPECT_NEAR(scale_consistency(song_of({{0, all}})).value, 700.0 / 12.0, 1e-12);
    auto e = scale_consistency(CanonicalSong{});
    EXPECT_EQ(e.value, 100.0);
    EXPECT_TRUE(e.flagged);
}

namespace {
// slot s of a bar is beat s / 12, position s % 12
Note at_slot(int bar, int slot) { return {bar * kBeatsPerBar + slot / kResolution, slot % kResolution, 60, 1}; }
}  // namespace

TEST(GrooveConsistency, Examples) {
    auto same = song_of({{0, {{0, 3, 60, 12}, {4, 3, 62, 12}, {8, 3, 64, 12}}}});
    EXPECT_EQ(groove_consistency(same).value, 100.0);

    // distances 6 and 12
    std::vector<Note> n = {at_slot(0, 0)};
    for (int s = 0; s <= 6; ++s) n.push_back(at_slot(1, s));
    for (int s = 0; s <= 18; ++s) n.push_back(at_slot(2, s));
    EXPECT_NEAR(groove_consistency(song_of({{0, n}})).value, 81.25, 1e-12);

    // complementary bars differ in all 48 slots
    std::vector<Note> c;
    for (int s = 0; s < 48; ++s) c.push_back(at_slot(s % 2, s));
    EXPECT_EQ(groove_consistency(song_of({{0, c}})).value, 0.0);

    auto single = groove_consistency(song_of({{0, {{0, 0, 60, 12}}}}));
    EXPECT_EQ(single.value, 100.0);
    EXPECT_TRUE(single.flagged);
}

TEST(EmptyMeasureRate, Examples) {
    std::vector<Note> every;
    for (int b = 0; b < 4; ++b) every.push_back({4 * b + 1, 0, 60, 12});
    EXPECT_EQ(empty_measure_rate(song_of({{0, every}})).value, 0.0);
    auto two = song_of({{0, {{0, 0, 60, 12}, {8, 0, 60, 12}}}, {1, every}});
    EXPECT_EQ(empty_measure_rate(two).value, 25.0);
    auto e = empty_measure_rate(CanonicalSong{});
    EXPECT_EQ(e.value, 100.0);
    EXPECT_TRUE(e.flagged);
}

TEST(InterInstrumentSimilarity, Examples) {
    auto one = inter_instrument_similarity(song_of({{0, {{0, 0, 60, 12}, {1, 0, 64, 12}}}}));
    EXPECT_EQ(one.value, 0.0);
    EXPECT_TRUE(one.flagged);
    std::vector<Note> n = {{0, 0, 60, 12}, {1, 0, 63, 12}, {2, 0, 67, 12}};
    EXPECT_EQ(inter_instrument_similarity(song_of({{0, n}, {40, n}})).value, 0.0);
    // entropies 1 bit (two classes) and 2 bits (four classes)
    auto s = song_of({{0, {{0, 0, 60, 12}, {1, 0, 62, 12}}},
                      {1, {{0, 0, 60, 12}, {1, 0, 62, 12}, {2, 0, 64, 12}, {3, 0, 65, 12}}}});
    EXPECT_NEAR(inter_instrument_similarity(s).value, 0.5, 1e-12);
}

TEST(InstrumentConsistency, Examples) {
    auto a = bars_with_counts({1, 2, 3, 4});
    EXPECT_NEAR(instrument_consistency(a, a).value, 1.0, 1e-12);
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {2, 4, 6, 8}).value, 1.0, 1e-12);
    EXPECT_NEAR(instrument_consistency(bars_with_counts({1, 2, 1, 2}), bars_with_counts({2, 1, 2, 1})).value, -1.0, 1e-12);
    auto flat = bars_with_counts({2, 2, 2});
    EXPECT_EQ(instrument_consistency(flat, flat).value, 1.0);
    auto diff = instrument_consistency(flat, bars_with_counts({1, 1, 3}));
    EXPECT_EQ(diff.value, 0.0);
    EXPECT_TRUE(diff.flagged);
    // the shorter song sets the window
    EXPECT_NEAR(instrument_consistency(bars_with_counts({1, 2}), bars_with_counts({1, 2, 5, 1, 1})).value, 1.0, 1e-12);
}

TEST(Metrics, RangesAndInvariances) {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        auto s = test_support::random_song(rng);
        auto m = song_metrics(s, s);
        EXPECT_GE(m.values[0], 0.0);
        EXPECT_LE(m.values[0], std::log2(12.0) + 1e-12);
        for (int k : {1, 2, 3}) {
            EXPECT_GE(m.values[k], 0.0);
            EXPECT_LE(m.values[k], 100.0 + 1e-9);
        }
        EXPECT_GE(m.values[5], -1.0);
        EXPECT_LE(m.values[5], 1.0);
        if (!m.flags[5]) {
            EXPECT_NEAR(m.values[5], 1.0, 1e-12);
        }

        // track and note order
        CanonicalSong r = s;
        std::reverse(r.tracks.begin(), r.tracks.end());
        for (auto& t : r.tracks) std::reverse(t.notes.begin(), t.notes.end());
        auto mr = song_metrics(r, r);
        for (int k = 0; k < kNumMetrics; ++k) EXPECT_NEAR(mr.values[k], m.values[k], 1e-12);

        // octave shifts of some notes keep entropy; chromatic transposition keeps scale consistency
        CanonicalSong oct = s, trans = s, repitch = s;
        for (auto& t : oct.tracks)
            for (std::size_t k = 0; k < t.notes.size(); k += 2) t.notes[k].pitch += (t.notes[k].pitch < 100 ? 12 : -12);
        int shift = 1 + static_cast<int>(rng.index(11));
        for (auto& t : trans.tracks)
            for (auto& n : t.notes) n.pitch += shift;
        for (auto& t : repitch.tracks)
            for (auto& n : t.notes) n.pitch = 30 + static_cast<int>(rng.index(60));
        EXPECT_NEAR(pitch_class_entropy(oct).value, m.values[0], 1e-12);
        EXPECT_NEAR(scale_consistency(trans).value, m.values[1], 1e-12);
        EXPECT_EQ(groove_consistency(repitch).value, m.values[2]);
    }
}

TEST(Metrics, ToySongsMatchOracle) {
    auto o = oracle();
    std::vector<NamedSong> gen, ref;
    for (auto& [name, js] : o["songs"].items()) gen.push_back({name, song_from_json(js)});
    for (auto& [name, target] : o["pairs"].items())
        ref.push_back({name, song_from_json(o["songs"][target.get<std::string>()])});
    auto rep = evaluate_corpus(gen, ref, "toy");
    ASSERT_EQ(rep.details.size(), 6u);
    for (const auto& d : rep.details) {
        // reference "x" holds the song paired with generated "x"
        const auto& want = d.set == "ground_truth" ? o["ground_truth"][o["pairs"][d.name].get<std::string>()]
                                                   : o["generated"][d.name];
        for (int i = 0; i < kNumMetrics; ++i)
            EXPECT_NEAR(d.metrics.values[i], want[i].get<double>(), 1e-9) << d.set << " " << d.name << " " << kMetricNames[i];
    }
    for (int i = 0; i < kNumMetrics; ++i) {
        EXPECT_NEAR(rep.ground_truth.mean[i], o["ground_truth_mean"][i].get<double>(), 1e-9);
        EXPECT_NEAR(rep.generated.mean[i], o["generated_mean"][i].get<double>(), 1e-9);
    }
    // analytic anchors
    auto chromatic = song_from_json(o["songs"]["chromatic"]);
    EXPECT_NEAR(pitch_class_entropy(chromatic).value, 3.5849625007211561, 1e-12);
    EXPECT_NEAR(scale_consistency(chromatic).value, 100.0 * 7 / 12, 1e-12);
    EXPECT_EQ(rep.ground_truth.mean[5], 1.0);
}

TEST(EvaluateCorpus, SelfComparisonEqualsGroundTruth) {
    Rng rng(2);
    std::vector<NamedSong> set;
    for (int i = 0; i < 10; ++i) set.push_back({"s" + std::to_string(i), test_support::random_song(rng)});
    auto rep = evaluate_corpus(set, set, "copy");
    EXPECT_EQ(rep.generated.mean, rep.ground_truth.mean);
    for (const auto& d : rep.details)
        if (!d.metrics.flags[5]) {
            EXPECT_EQ(d.metrics.values[5], 1.0);
        }
}

TEST(EvaluateCorpus, PairingErrors) {
    Rng rng(3);
    std::vector<NamedSong> ref = {{"a", test_support::random_song(rng)}, {"b", test_support::random_song(rng)}};
    auto code = [&](const std::vector<NamedSong>& g) {
        try {
            evaluate_corpus(g, ref);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::Io;
    };
    EXPECT_EQ(code({}), Errc::PairingMismatch);
    EXPECT_EQ(code({ref[0]}), Errc::PairingMismatch);
    EXPECT_EQ(code({ref[0], {"c", ref[1].song}}), Errc::PairingMismatch);
    EXPECT_EQ(code({ref[0], ref[0]}), Errc::PairingMismatch);
}

TEST(EvaluateCorpus, ReportFiles) {
    Rng rng(4);
    std::vector<NamedSong> set = {{"x", test_support::random_song(rng)}, {"y", CanonicalSong{}}};
    auto rep = evaluate_corpus(set, set, "model");
    auto csv = report_csv(rep);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "model,pitch_class_entropy,scale_consistency,groove_consistency,empty_measure_rate,"
              "inter_instrument_similarity,instrument_consistency");
    EXPECT_NE(csv.find("\nground_truth,"), std::string::npos);
    EXPECT_NE(csv.find("\nmodel,"), std::string::npos);
    auto det = details_csv(rep);
    EXPECT_NE(det.find("ground_truth,y,"), std::string::npos);
    EXPECT_NE(det.find("pitch_class_entropy;"), std::string::npos);
    auto table = report_table(rep);
    EXPECT_NE(table.find("PCE"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}
