// msat_synth: writes a small corpus of synthetic MIDI files for demos and
// smoke runs. Songs are diatonic melodies over a bass line; a given number
// of extra files are written in 3/4 so ingest has something to reject.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "msat/midi.hpp"
#include "msat/rng.hpp"

namespace fs = std::filesystem;
using namespace msat;

namespace {

constexpr int kMajor[7] = {0, 2, 4, 5, 7, 9, 11};

CanonicalSong synth_song(Rng& rng) {
    const int bars = 4 + static_cast<int>(rng.index(5));
    const int key = static_cast<int>(rng.index(12));
    constexpr int melody_programs[] = {0, 24, 40, 73};
    constexpr int bass_programs[] = {32, 33, 42};
    CanonicalSong s;
    Track melody{melody_programs[rng.index(4)], {}}, bass{bass_programs[rng.index(3)], {}};
    int degree = 0;
    for (int bar = 0; bar < bars; ++bar) {
        const int root = kMajor[(bar * 3) % 7];
        bass.notes.push_back({bar * kBeatsPerBar, 0, 36 + key + root, 48});
        for (int beat = 0; beat < kBeatsPerBar; ++beat)
            for (int pos : {0, 6}) {
                if (pos == 6 && rng.uniform() < 0.6) continue;
                degree = std::clamp(degree + static_cast<int>(rng.index(5)) - 2, 0, 13);
                int pitch = 60 + key + 12 * (degree / 7) + kMajor[degree % 7];
                melody.notes.push_back({bar * kBeatsPerBar + beat, pos, pitch, 6});
            }
    }
    s.tracks = {melody, bass};
    if (s.tracks[0].program > s.tracks[1].program) std::swap(s.tracks[0], s.tracks[1]);
    canonicalize(s);
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic MIDI corpus"};
    std::string out;
    int count = 20, odd_meter = 0;
    std::uint64_t seed = 0;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--count", count, "number of 4/4 songs")->check(CLI::NonNegativeNumber);
    app.add_option("--odd-meter", odd_meter, "number of extra 3/4 songs")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "random seed");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        Rng rng(seed);
        fs::create_directories(out);
        for (int i = 0; i < count + odd_meter; ++i) {
            auto raw = midi::song_to_raw(synth_song(rng));
            if (i >= count)
                for (auto& e : raw.tracks[0].events)
                    if (e.kind == midi::EventKind::time_signature) e.data1 = 3;
            char name[32];
            std::snprintf(name, sizeof name, "%s%03d.mid", i < count ? "song" : "waltz", i);
            midi::save_smf(fs::path(out) / name, raw);
        }
        std::cout << "wrote " << count + odd_meter << " files to " << out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
