// msat: ingest, tokenize, train, generate, evaluate and report.
//
// Every subcommand takes a fixed set of keys. A key can be given in the
// --config file (`key = value`) or as the flag --key-name; flags win. The
// effective configuration is printed to stderr before the run starts and is
// itself a valid config file.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msat/config.hpp"
#include "msat/generate.hpp"
#include "msat/ingest.hpp"
#include "msat/metrics.hpp"
#include "msat/midi.hpp"
#include "msat/nn/checkpoint.hpp"
#include "msat/train.hpp"

namespace fs = std::filesystem;
using namespace msat;

namespace {

struct Key {
    std::string name;
    std::string def;
    std::string help;
    bool is_bool = false;
};

struct Command {
    std::string name;
    std::string help;
    std::vector<Key> keys;
    std::function<int(const KeyValues&)> run;
};

std::string kebab(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

const std::string& need(const KeyValues& kv, const std::string& k) {
    const auto& v = kv.at(k);
    if (v.empty()) fail(Errc::Config, "--" + kebab(k) + " is required");
    return v;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) out.push_back(parse_double(key, item));
    return out;
}

template <class T>
std::array<T, kNumFields> per_field(const std::string& key, const std::vector<T>& v) {
    std::array<T, kNumFields> out;
    if (v.size() == 1) out.fill(v[0]);
    else if (v.size() == kNumFields) std::copy(v.begin(), v.end(), out.begin());
    else fail(Errc::Config, key + ": give one value or six comma-separated values");
    return out;
}

std::vector<CanonicalSong> load_song_dir(const std::string& dir) {
    std::vector<CanonicalSong> out;
    if (dir.empty()) return out;
    for (const auto& p : list_files(dir, {".json"})) out.push_back(load_song(p));
    return out;
}

std::vector<NamedSong> load_named_songs(const std::string& dir) {
    std::vector<NamedSong> out;
    for (const auto& p : list_files(dir, {".json"})) out.push_back({p.stem().string(), load_song(p)});
    return out;
}

KeyValues subset(const KeyValues& kv, const KeyValues& keys) {
    KeyValues out;
    for (const auto& [k, v] : kv)
        if (keys.count(k)) out[k] = v;
    return out;
}

std::vector<Key> train_keys(std::initializer_list<std::string_view> drop) {
    const TrainConfig defaults;
    std::vector<Key> out;
    for (const auto& [k, v] : defaults.to_key_values())
        if (std::find(drop.begin(), drop.end(), k) == drop.end()) out.push_back({k, v, "training: " + k});
    out.push_back({"train", "", "directory of training songs (.json)"});
    out.push_back({"valid", "", "directory of validation songs (.json); train songs are used when empty"});
    return out;
}

TrainConfig train_config(const KeyValues& kv) { return TrainConfig::from_key_values(subset(kv, TrainConfig().to_key_values())); }

void print_result(const TrainResult& r) {
    std::cout << "best_step=" << r.best_step << " best_loss=" << r.best_loss
              << " validated_on=" << (r.validated_on_train ? "train" : "valid") << "\n";
}

// ---------------------------------------------------------------------------

int cmd_ingest(const KeyValues& kv) {
    const fs::path in = need(kv, "in"), out = need(kv, "out");
    const bool split = parse_bool("split", kv.at("split"));
    const auto seed = static_cast<std::uint64_t>(parse_int("seed", kv.at("seed")));
    const fs::path rej_path = kv.at("rejections").empty() ? out / "rejections.log" : fs::path(kv.at("rejections"));

    std::vector<NamedSong> songs;
    std::string rejections;
    int unreadable = 0;
    for (const auto& p : list_files(in, {".mid", ".midi"})) {
        try {
            auto r = normalize(midi::read_smf(p));
            if (auto* why = std::get_if<Rejection>(&r)) {
                rejections += p.filename().string() + "\t" + std::string(rejection_name(*why)) + "\n";
                continue;
            }
            songs.push_back({p.stem().string(), std::get<CanonicalSong>(std::move(r))});
        } catch (const Error& e) {
            rejections += p.filename().string() + "\t" + e.what() + "\n";
            ++unreadable;
        }
    }
    fs::create_directories(out);
    auto write = [](const fs::path& dir, const std::vector<NamedSong>& set) {
        fs::create_directories(dir);
        for (const auto& s : set) save_song(dir / (s.name + ".json"), s.song);
    };
    if (split) {
        auto parts = split_corpus(songs, seed);
        write(out / "train", parts.train);
        write(out / "valid", parts.valid);
        write(out / "test", parts.test);
        std::cout << "train=" << parts.train.size() << " valid=" << parts.valid.size() << " test=" << parts.test.size()
                  << "\n";
    } else {
        write(out, songs);
    }
    write_text_file(rej_path, rejections);
    const auto rejected = static_cast<std::size_t>(std::count(rejections.begin(), rejections.end(), '\n'));
    std::cout << "written=" << songs.size() << " rejected=" << rejected << "\n";
    return unreadable ? 1 : 0;
}

int cmd_tokenize(const KeyValues& kv) {
    const fs::path in = need(kv, "in"), out = need(kv, "out");
    std::vector<Scale> scales;
    if (kv.at("scale") == "all") scales.assign(kScales.begin(), kScales.end());
    else scales.push_back(parse_scale(kv.at("scale")));
    std::vector<fs::path> files = fs::is_directory(in) ? list_files(in, {".json"}) : std::vector<fs::path>{in};
    fs::create_directories(out);
    for (const auto& p : files) {
        auto ev = encode(load_song(p));
        for (Scale s : scales)
            write_text_file(out / (p.stem().string() + "." + std::string(scale_name(s)) + ".tokens"),
                            format_tokens(serialize(ev, s)));
    }
    std::cout << "tokenized=" << files.size() << "\n";
    return 0;
}

int cmd_train_single(const KeyValues& kv) {
    auto cfg = train_config(kv);
    if (cfg.checkpoint.empty()) fail(Errc::Config, "--checkpoint is required");
    auto r = train_single_scale(load_song_dir(need(kv, "train")), load_song_dir(kv.at("valid")), cfg.target_scale, cfg,
                                &std::cout);
    print_result(r);
    return 0;
}

int cmd_train_msat(const KeyValues& kv) {
    auto cfg = train_config(kv);
    if (cfg.checkpoint.empty()) fail(Errc::Config, "--checkpoint is required");
    auto note = nn::load_checkpoint(need(kv, "note_ckpt"));
    auto track = nn::load_checkpoint(need(kv, "track_ckpt"));
    std::optional<nn::Checkpoint> bar;
    if (!kv.at("bar_ckpt").empty()) bar = nn::load_checkpoint(kv.at("bar_ckpt"));
    auto r = train_msat(load_song_dir(need(kv, "train")), load_song_dir(kv.at("valid")), note, track, bar, cfg,
                        &std::cout);
    print_result(r);
    return 0;
}

GenerationTask task_for(const KeyValues& kv, const std::optional<CanonicalSong>& reference) {
    const auto& task = kv.at("task");
    const int n_beats = static_cast<int>(parse_int("n_beats", kv.at("n_beats")));
    if (task == "continue") {
        if (reference) return GenerationTask::continuation(*reference, n_beats);
        return GenerationTask::continuation(load_song(need(kv, "prompt")), n_beats);
    }
    if (task != "instrument") fail(Errc::Config, "task must be instrument or continue, got '" + task + "'");
    if (reference) return GenerationTask::instruments_of(*reference);
    if (!kv.at("reference").empty()) return GenerationTask::instruments_of(load_song(kv.at("reference")));
    return GenerationTask::instrument_informed(parse_int_list("instruments", need(kv, "instruments")));
}

void write_generation(const GenerationResult& r, const fs::path& song, const fs::path& diag, const fs::path& mid) {
    save_song(song, r.song);
    write_text_file(diag, r.diagnostics.to_json().dump(1) + "\n");
    if (!mid.empty()) midi::save_smf(mid, midi::song_to_raw(r.song));
}

int cmd_generate(const KeyValues& kv) {
    auto ckpt = nn::load_checkpoint(need(kv, "checkpoint"));
    SamplingConfig sc;
    sc.temperature = per_field("temperature", parse_double_list("temperature", kv.at("temperature")));
    sc.top_k = per_field("top_k", parse_int_list("top_k", kv.at("top_k")));
    sc.max_events = static_cast<int>(parse_int("max_events", kv.at("max_events")));
    sc.seed = static_cast<std::uint64_t>(parse_int("seed", kv.at("seed")));
    sc.validity = parse_bool("validity", kv.at("validity"));
    sc.validate();
    const fs::path out = need(kv, "out");

    if (!kv.at("reference_dir").empty()) {
        fs::create_directories(out / "diagnostics");
        const fs::path mid_dir = kv.at("midi");
        if (!mid_dir.empty()) fs::create_directories(mid_dir);
        auto refs = load_named_songs(kv.at("reference_dir"));
        const std::uint64_t base = sc.seed;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            sc.seed = base + i;
            auto r = generate(ckpt.model, task_for(kv, refs[i].song), sc);
            const auto& name = refs[i].name;
            write_generation(r, out / (name + ".json"), out / "diagnostics" / (name + ".json"),
                             mid_dir.empty() ? fs::path() : mid_dir / (name + ".mid"));
            std::cout << name << " events=" << r.diagnostics.generated_events << " stop=" << r.diagnostics.stop_reason
                      << "\n";
        }
        return 0;
    }
    auto r = generate(ckpt.model, task_for(kv, std::nullopt), sc);
    fs::path diag = kv.at("diagnostics");
    if (diag.empty()) diag = fs::path(out).replace_extension(".diag.json");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_generation(r, out, diag, kv.at("midi"));
    std::cout << r.diagnostics.to_json().dump() << "\n";
    return 0;
}

int cmd_evaluate(const KeyValues& kv) {
    auto rep = evaluate_corpus(load_named_songs(need(kv, "generated")), load_named_songs(need(kv, "reference")),
                               kv.at("label"));
    const fs::path out = need(kv, "out");
    fs::create_directories(out);
    write_text_file(out / "report.csv", report_csv(rep));
    write_text_file(out / "details.csv", details_csv(rep));
    std::cout << report_table(rep);
    return 0;
}

int cmd_attn_report(const KeyValues& kv) {
    auto ckpt = nn::load_checkpoint(need(kv, "checkpoint"));
    auto text = format_attn_report(attn_report(ckpt.model));
    if (!kv.at("out").empty()) write_text_file(kv.at("out"), text);
    std::cout << text;
    return 0;
}

std::vector<Command> commands() {
    const Key seed{"seed", "0", "random seed"};
    std::vector<Command> c;
    c.push_back({"ingest",
                 "normalize a directory of MIDI files into canonical songs",
                 {{"in", "", "input directory (.mid, .midi)"},
                  {"out", "", "output directory"},
                  {"split", "false", "write train/valid/test subdirectories (80/10/10)", true},
                  {"rejections", "", "rejection log (default <out>/rejections.log)"},
                  seed},
                 cmd_ingest});
    c.push_back({"tokenize",
                 "write token files for one or all scales",
                 {{"in", "", "song file or directory"},
                  {"out", "", "output directory"},
                  {"scale", "all", "note, bar, track or all"}},
                 cmd_tokenize});
    auto single = train_keys({"fusion", "bar_init"});
    c.push_back({"train-single", "train one single-scale decoder", single, cmd_train_single});
    auto multi = train_keys({"target_scale", "d_model", "n_layers", "n_heads", "d_ff", "token_dim"});
    multi.push_back({"note_ckpt", "", "pretrained note-scale checkpoint"});
    multi.push_back({"track_ckpt", "", "pretrained track-scale checkpoint"});
    multi.push_back({"bar_ckpt", "", "pretrained bar-scale checkpoint (bar_init = pretrained)"});
    c.push_back({"train-msat", "train the multi-scale model on frozen note/track decoders", multi, cmd_train_msat});
    c.push_back({"generate",
                 "sample songs from a checkpoint",
                 {{"checkpoint", "", "model checkpoint"},
                  {"task", "instrument", "instrument or continue"},
                  {"instruments", "", "comma-separated programs (task instrument)"},
                  {"reference", "", "song whose instrument set is used (task instrument)"},
                  {"prompt", "", "prompt song (task continue)"},
                  {"reference_dir", "", "one song per reference song, same name; out is then a directory"},
                  {"n_beats", "16", "prompt length in beats (task continue)"},
                  {"out", "", "output song (.json) or directory"},
                  {"midi", "", "also write MIDI to this file (or directory)"},
                  {"diagnostics", "", "diagnostics sidecar (default <out>.diag.json)"},
                  {"temperature", "1", "one value or six per-field values"},
                  {"top_k", "32", "one value or six per-field values"},
                  {"max_events", "1024", "event cap"},
                  {"validity", "true", "mask grammar-invalid codes", true},
                  seed},
                 cmd_generate});
    c.push_back({"evaluate",
                 "objective metrics of generated songs against references paired by name",
                 {{"generated", "", "directory of generated songs"},
                  {"reference", "", "directory of reference songs"},
                  {"out", "", "directory for report.csv and details.csv"},
                  {"label", "generated", "model label in the report"}},
                 cmd_evaluate});
    c.push_back({"attn-report",
                 "global fusion weights per token type",
                 {{"checkpoint", "", "global-fusion MSAT checkpoint"}, {"out", "", "also write the table here"}},
                 cmd_attn_report});
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-scale attentive music generation"};
    app.require_subcommand(1);
    auto cmds = commands();
    std::map<std::string, std::map<std::string, std::string>> given;
    std::map<std::string, std::string> config_path;
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        subs[c.name] = sub;
        sub->add_option("--config", config_path[c.name], "config file of key = value lines");
        for (const auto& k : c.keys) {
            auto& slot = given[c.name][k.name];
            auto* opt = k.is_bool ? sub->add_flag("--" + kebab(k.name) + "{true}", slot, k.help)
                                  : sub->add_option("--" + kebab(k.name), slot, k.help);
            if (!k.def.empty()) opt->default_str(k.def);
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    for (const auto& c : cmds) {
        auto* sub = subs[c.name];
        if (!sub->parsed()) continue;
        try {
            KeyValues kv, known;
            for (const auto& k : c.keys) known[k.name] = k.def;
            kv = known;
            if (!config_path[c.name].empty()) {
                auto file = parse_key_values(read_text_file(config_path[c.name]));
                check_known_keys(file, known);
                for (const auto& [k, v] : file) kv[k] = v;
            }
            for (const auto& k : c.keys)
                if (sub->get_option("--" + kebab(k.name))->count() > 0) kv[k.name] = given[c.name][k.name];
            std::cerr << "# msat " << c.name << "\n" << format_key_values(kv) << std::flush;
            return c.run(kv);
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return e.code() == Errc::Config ? 2 : 1;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    return 2;
}
