#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "msat/generate.hpp"
#include "msat/nn/checkpoint.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace msat;

namespace {

struct CliRun {
    int code = -1;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("msat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    CliRun run(const std::string& args) {
        const auto o = dir / "stdout.txt", e = dir / "stderr.txt";
        const std::string cmd = "cd '" + dir.string() + "' && '" MSAT_CLI "' " + args + " >'" + o.string() + "' 2>'" +
                                e.string() + "'";
        int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text_file(o), read_text_file(e)};
    }

    void write_songs(const std::string& sub, int n, int bars = 4) {
        fs::create_directories(dir / sub);
        for (int i = 0; i < n; ++i) {
            auto s = test_support::toy_song(bars + i);
            save_song(dir / sub / ("song" + std::to_string(i) + ".json"), s);
        }
    }

    void write_config() {
        write_text_file(dir / "small.cfg",
                        "d_model = 16\nn_layers = 1\nn_heads = 2\nd_ff = 32\ntoken_dim = 8\nmax_len = 200\n"
                        "max_steps = 6\nvalid_every = 3\nbatch_size = 2\n");
        write_text_file(dir / "msat.cfg", "max_len = 200\nmax_steps = 6\nvalid_every = 3\nbatch_size = 2\n");
    }

    void pretrain() {
        write_songs("train", 3);
        write_config();
        for (const char* s : {"note", "track", "bar"}) {
            auto r = run(std::string("train-single --config small.cfg --train train --target-scale ") + s +
                         " --checkpoint " + s + ".ckpt --seed 1");
            ASSERT_EQ(r.code, 0) << r.err;
        }
    }

    std::string msat_args(const std::string& ckpt, const std::string& fusion = "global") {
        return "train-msat --config msat.cfg --fusion " + fusion +
               " --train train --note-ckpt note.ckpt --track-ckpt track.ckpt --bar-ckpt bar.ckpt --checkpoint " +
               ckpt + " --seed 7";
    }
};

}  // namespace

TEST_F(Cli, IngestWritesOneSongAndLogsOneRejection) {
    fs::create_directories(dir / "in");
    fs::copy(test_support::data_dir() / "waltz_34.mid", dir / "in");
    fs::copy(test_support::data_dir() / "common_44.mid", dir / "in");
    auto r = run("ingest --in in --out corpus");
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "corpus" / "common_44.json"));
    EXPECT_FALSE(fs::exists(dir / "corpus" / "waltz_34.json"));
    EXPECT_EQ(read_text_file(dir / "corpus" / "rejections.log"), "waltz_34.mid\tNonCommonTime\n");
    EXPECT_NE(r.out.find("written=1 rejected=1"), std::string::npos);

    // rerunning overwrites instead of appending
    auto first = read_text_file(dir / "corpus" / "common_44.json");
    EXPECT_EQ(run("ingest --in in --out corpus").code, 0);
    EXPECT_EQ(read_text_file(dir / "corpus" / "common_44.json"), first);
    EXPECT_EQ(read_text_file(dir / "corpus" / "rejections.log"), "waltz_34.mid\tNonCommonTime\n");
}

TEST_F(Cli, UnreadableMidiIsADomainError) {
    fs::create_directories(dir / "in");
    write_text_file(dir / "in" / "broken.mid", "MThd");
    auto r = run("ingest --in in --out corpus");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(read_text_file(dir / "corpus" / "rejections.log").find("broken.mid"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwoAndNameTheFlag) {
    auto r = run("ingest --in x --out y --bogus 3");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--bogus"), std::string::npos);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    r = run("ingest --in x");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--out"), std::string::npos);
    write_text_file(dir / "bad.cfg", "learning_rat = 0.1\n");
    r = run("train-single --config bad.cfg --train t --checkpoint c");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("learning_rat"), std::string::npos);
    EXPECT_EQ(run("train-single --train t --checkpoint c --batch-size zero").code, 2);
}

TEST_F(Cli, FlagsOverrideConfigAndBannerReproducesTheRun) {
    write_songs("songs", 2);
    write_text_file(dir / "tok.cfg", "in = songs\nout = a\nscale = note\n");
    auto r = run("tokenize --config tok.cfg --scale track");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "a" / "song0.track.tokens"));
    EXPECT_FALSE(fs::exists(dir / "a" / "song0.note.tokens"));
    EXPECT_NE(r.err.find("scale = track"), std::string::npos);

    // the banner minus its title line is a config file for the same run
    auto banner = r.err.substr(r.err.find('\n') + 1);
    write_text_file(dir / "banner.cfg", banner);
    fs::rename(dir / "a", dir / "a_first");
    ASSERT_EQ(run("tokenize --config banner.cfg").code, 0);
    EXPECT_EQ(read_text_file(dir / "a" / "song0.track.tokens"), read_text_file(dir / "a_first" / "song0.track.tokens"));
}

TEST_F(Cli, TrainMsatIsDeterministic) {
    pretrain();
    ASSERT_EQ(run(msat_args("ga.ckpt")).code, 0);
    auto first = read_text_file(dir / "ga.ckpt");
    auto r = run(msat_args("ga.ckpt"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_text_file(dir / "ga.ckpt"), first);
    EXPECT_NE(r.out.find("alpha type="), std::string::npos);

    auto ck = nn::load_checkpoint(dir / "ga.ckpt");
    auto note = nn::load_checkpoint(dir / "note.ckpt");
    EXPECT_EQ(nn::group_checksum(ck.model, "decoder.note"), nn::group_checksum(note.model, "decoder.note"));
}

TEST_F(Cli, TrainMsatNeedsBarCheckpointUnlessScratch) {
    pretrain();
    auto args = "train-msat --config msat.cfg --train train --note-ckpt note.ckpt --track-ckpt track.ckpt "
                "--checkpoint la.ckpt --fusion local";
    EXPECT_EQ(run(args).code, 2);
    EXPECT_EQ(run(std::string(args) + " --bar-init scratch").code, 0);
    // note checkpoint in the track slot
    EXPECT_EQ(run("train-msat --config msat.cfg --train train --note-ckpt note.ckpt --track-ckpt note.ckpt "
                  "--bar-ckpt bar.ckpt --checkpoint x.ckpt")
                  .code,
              1);
}

TEST_F(Cli, DivergenceExitsOne) {
    write_songs("train", 1);
    write_config();
    auto r = run("train-single --config small.cfg --train train --checkpoint c.ckpt --learning-rate 1e300");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("DivergenceDetected"), std::string::npos);
}

TEST_F(Cli, GenerateContinuationKeepsPromptAndWritesSidecars) {
    pretrain();
    ASSERT_EQ(run(msat_args("ga.ckpt")).code, 0);
    auto prompt = test_support::toy_song(6);
    save_song(dir / "prompt.json", prompt);
    auto r = run("generate --checkpoint ga.ckpt --task continue --n-beats 16 --prompt prompt.json --out out/song.json "
                 "--midi out/song.mid --max-events 120 --seed 5");
    ASSERT_EQ(r.code, 0) << r.err;
    auto song = load_song(dir / "out" / "song.json");
    EXPECT_EQ(opening(song, 16), opening(prompt, 16));
    auto diag = nlohmann::json::parse(read_text_file(dir / "out" / "song.diag.json"));
    EXPECT_TRUE(diag.contains("masked_fallbacks"));
    EXPECT_TRUE(fs::exists(dir / "out" / "song.mid"));

    auto first = read_text_file(dir / "out" / "song.json");
    ASSERT_EQ(run("generate --checkpoint ga.ckpt --task continue --n-beats 16 --prompt prompt.json --out out/song.json "
                  "--max-events 120 --seed 5")
                  .code,
              0);
    EXPECT_EQ(read_text_file(dir / "out" / "song.json"), first);
}

TEST_F(Cli, GenerateEvaluateAndReport) {
    pretrain();
    ASSERT_EQ(run(msat_args("ga.ckpt")).code, 0);
    write_songs("test", 2, 5);
    auto r = run("generate --checkpoint ga.ckpt --reference-dir test --out gen --max-events 80 --seed 2");
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* n : {"song0", "song1"}) {
        auto g = load_song(dir / "gen" / (std::string(n) + ".json"));
        std::set<int> programs;
        for (const auto& t : g.tracks) programs.insert(t.program);
        EXPECT_EQ(programs, (std::set<int>{0, 33}));
        EXPECT_TRUE(fs::exists(dir / "gen" / "diagnostics" / (std::string(n) + ".json")));
    }
    r = run("evaluate --generated gen --reference test --out eval --label ga");
    ASSERT_EQ(r.code, 0) << r.err;
    auto csv = read_text_file(dir / "eval" / "report.csv");
    EXPECT_NE(csv.find("\nground_truth,"), std::string::npos);
    EXPECT_NE(csv.find("\nga,"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "eval" / "details.csv"));
    EXPECT_NE(r.out.find("PCE"), std::string::npos);

    fs::remove(dir / "gen" / "song1.json");
    EXPECT_EQ(run("evaluate --generated gen --reference test --out eval").code, 1);

    r = run("attn-report --checkpoint ga.ckpt --out attn.txt");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 7);
    EXPECT_EQ(read_text_file(dir / "attn.txt"), r.out);
    EXPECT_EQ(run("attn-report --checkpoint note.ckpt").code, 1);
}
