// timbre: command-line front end. Every subcommand that produces files writes
// them into one run directory (--out) together with run.json.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "artifacts.hpp"
#include "timbre/audio.hpp"
#include "timbre/baseline.hpp"
#include "timbre/corpus.hpp"
#include "timbre/cqt.hpp"
#include "timbre/network.hpp"
#include "timbre/trainer.hpp"

namespace {

using namespace timbre;
using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
    std::string arch = "all";
    std::string expect_arch; // evaluate: empty accepts the stored architecture
    fs::path manifest;
    fs::path out;
    fs::path checkpoint;
    fs::path input;
    std::uint64_t seed = 0;
    std::size_t epochs_cap = 100;
    std::size_t epoch_size = 8192;
    std::size_t trials = 10;
    std::vector<std::uint64_t> seeds;
    double silence_db = -60.0;
    double lr = 1e-3;
    double time_budget = 0.0;
    std::size_t threads = 0;
    std::size_t trees = 100;
    std::string split = "test";
    bool weighted = false;
    training::CorpusConfig corpus;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json run_metadata(const std::string& command, const json& config)
{
    return {{"command", command}, {"config", config}, {"build", cli::build_info()}};
}

training::Split parse_split(const std::string& s)
{
    if (s == "train") return training::Split::train;
    if (s == "test") return training::Split::test;
    throw ParameterError("split must be train or test, got '" + s + "'");
}

training::TrainConfig train_config(const Options& o)
{
    training::TrainConfig cfg;
    cfg.epoch_size = o.epoch_size;
    cfg.max_epochs = o.epochs_cap;
    cfg.learning_rate = o.lr;
    cfg.seed = o.seed;
    cfg.time_budget_seconds = o.time_budget;
    cfg.threads = o.threads;
    return cfg;
}

json train_config_json(const Options& o)
{
    return {{"arch", o.arch},           {"manifest", o.manifest.generic_string()},
            {"seed", o.seed},           {"epochs_cap", o.epochs_cap},
            {"epoch_size", o.epoch_size}, {"learning_rate", o.lr},
            {"time_budget_seconds", o.time_budget}, {"silence_db", o.silence_db}};
}

void print_accuracy(const training::EvalReport& r, const std::array<std::string, training::kClasses>& names)
{
    for (std::size_t k = 0; k < training::kClasses; ++k) {
        const auto a = r.accuracy(k);
        if (a) {
            std::printf("  %-12s %6.2f%%  (%zu excerpts)\n", names[k].c_str(), *a, r.total[k]);
        } else {
            std::printf("  %-12s     NA\n", names[k].c_str());
        }
    }
    std::printf("  %-12s %6.2f%%\n", "average", r.mean_accuracy());
}

training::EpochCallback progress()
{
    return [](const training::EpochReport& e) {
        std::printf("epoch %3zu  loss %.6f  %.1fs\n", e.epoch, e.mean_loss, e.seconds);
        std::fflush(stdout);
    };
}

void cmd_synth(const Options& o)
{
    cli::RunDirectory run(o.out);
    auto cfg = o.corpus;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    const auto m = training::generate_corpus(run.stage("corpus"), cfg);
    std::printf("%zu files in %s\n", m.entries.size(), (o.out / "corpus").c_str());
    run.commit(run_metadata("synth", {{"seed", o.seed},
                                      {"instruments", cfg.instruments},
                                      {"pitches", cfg.pitches},
                                      {"base_hz", cfg.base_hz},
                                      {"nuances_db", cfg.nuances_db},
                                      {"duration", cfg.duration},
                                      {"test_every", cfg.test_every},
                                      {"files", m.entries.size()}}));
}

void cmd_mfcc_distances(const Options& o)
{
    const auto manifest = training::read_manifest(o.manifest);
    const auto study = training::mfcc_distance_study(manifest, o.silence_db, o.threads);
    for (const auto& w : study.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    cli::RunDirectory run(o.out);
    std::ostringstream csv;
    write_distance_csv(csv, study.rows);
    run.write_text("mfcc_distances.csv", csv.str());
    json ratios = json::object();
    for (const auto& [instrument, ratio] : study.pitch_ratio) {
        std::printf("  %-12s all-pitch / same-pitch median = %.2f\n", instrument.c_str(), ratio);
        ratios[instrument] = ratio;
    }
    run.commit(run_metadata("mfcc-distances", {{"manifest", o.manifest.generic_string()},
                                               {"silence_db", o.silence_db},
                                               {"pitch_ratio", ratios}}));
}

void cmd_count_params(const Options& o)
{
    const auto spec = arch::load_architecture(o.arch);
    std::printf("%-14s %-18s %-14s %10s\n", "layer", "kind", "output", "params");
    for (const auto& l : arch::describe(spec)) {
        std::printf("%-14s %-18s %-14s %10zu\n", l.where.c_str(), arch::to_string(l.kind).c_str(),
                    shape_string(l.output).c_str(), l.params);
    }
    std::printf("%-48s %10zu\n", ("total (" + spec.name + ")").c_str(), arch::count_params(spec));
    if (!o.out.empty()) {
        cli::RunDirectory run(o.out);
        run.write_text("architecture.json", arch::to_json(spec).dump(2) + "\n");
        run.commit(run_metadata("count-params", {{"arch", o.arch}, {"params", arch::count_params(spec)}}));
    }
}

void cmd_train(const Options& o)
{
    const auto spec = arch::load_architecture(o.arch);
    const auto manifest = training::read_manifest(o.manifest);
    const training::DatasetConfig dcfg{o.silence_db, o.threads};
    const training::Dataset train_set(manifest, training::Split::train, dcfg);
    const auto cfg = train_config(o);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = training::train(spec, train_set, cfg, progress());
    std::printf("stopped after %zu epochs (%s) in %.1fs\n", r.epoch_losses.size(), training::to_string(r.reason).c_str(),
                seconds_since(t0));

    cli::RunDirectory run(o.out);
    ad::save_checkpoint(run.stage("model.ckpt"), training::to_checkpoint(r, cfg, manifest.class_names));
    training::write_loss_history(run.stage("loss_history.csv"), r.epoch_losses);
    auto meta = train_config_json(o);
    meta["epochs"] = r.epoch_losses.size();
    meta["steps"] = r.steps;
    meta["stop_reason"] = training::to_string(r.reason);
    meta["params"] = arch::count_params(spec);
    run.commit(run_metadata("train", meta));
}

void cmd_evaluate(const Options& o)
{
    const auto ckpt = ad::load_checkpoint(o.checkpoint);
    std::optional<arch::NetworkSpec> expected;
    if (!o.expect_arch.empty()) expected = arch::load_architecture(o.expect_arch);
    const auto model = training::from_checkpoint(ckpt, expected ? &*expected : nullptr);
    const auto manifest = training::read_manifest(o.manifest);
    const training::Dataset test_set(manifest, training::Split::test, {o.silence_db, o.threads});
    const auto report = training::evaluate(model, test_set, o.threads);
    print_accuracy(report, manifest.class_names);

    cli::RunDirectory run(o.out);
    training::write_accuracy_csv(run.stage("accuracy.csv"), report, manifest.class_names);
    run.commit(run_metadata("evaluate", {{"checkpoint", o.checkpoint.generic_string()},
                                         {"manifest", o.manifest.generic_string()},
                                         {"arch", model.spec.name},
                                         {"silence_db", o.silence_db},
                                         {"excerpts", report.predictions.size()},
                                         {"dropped_silent", report.dropped_silent}}));
}

void cmd_trials(const Options& o)
{
    const auto spec = arch::load_architecture(o.arch);
    const auto manifest = training::read_manifest(o.manifest);
    const training::DatasetConfig dcfg{o.silence_db, o.threads};
    const training::Dataset train_set(manifest, training::Split::train, dcfg);
    const training::Dataset test_set(manifest, training::Split::test, dcfg);
    std::vector<std::uint64_t> seeds = o.seeds;
    if (seeds.empty()) {
        seeds.resize(o.trials);
        std::iota(seeds.begin(), seeds.end(), o.seed);
    }
    const auto summary = training::repeated_trials(spec, train_set, test_set, train_config(o), seeds, progress());
    for (std::size_t k = 0; k < training::kClasses; ++k) {
        if (summary.mean[k]) {
            std::printf("  %-12s %6.2f%% +- %.2f\n", manifest.class_names[k].c_str(), *summary.mean[k],
                        summary.stddev[k].value_or(0.0));
        }
    }
    std::printf("  %-12s %6.2f%% +- %.2f\n", "average", summary.average_mean, summary.average_stddev);

    cli::RunDirectory run(o.out);
    training::write_accuracy_csv(run.stage("accuracy.csv"), summary, manifest.class_names);
    auto meta = train_config_json(o);
    meta["seeds"] = seeds;
    run.commit(run_metadata("trials", meta));
}

void cmd_baseline(const Options& o)
{
    const auto manifest = training::read_manifest(o.manifest);
    forest::ForestConfig cfg;
    cfg.n_trees = o.trees;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    const auto r = forest::run_baseline(manifest, cfg, o.silence_db);
    print_accuracy(r.report, manifest.class_names);

    cli::RunDirectory run(o.out);
    training::write_accuracy_csv(run.stage("accuracy.csv"), r.report, manifest.class_names);
    run.write_text("forest.json", forest::to_json(r.model).dump() + "\n");
    run.commit(run_metadata("baseline", {{"manifest", o.manifest.generic_string()},
                                         {"seed", o.seed},
                                         {"trees", o.trees},
                                         {"silence_db", o.silence_db},
                                         {"train_excerpts", r.train.features.size()},
                                         {"test_excerpts", r.test.features.size()}}));
}

void cmd_cqt(const Options& o)
{
    const auto audio = load_audio(o.input);
    auto s = cqt_frames(audio);
    if (o.weighted) s = perceptual_weighting(s);

    cli::RunDirectory run(o.out);
    const auto stem = o.input.stem().string();
    {
        // Little-endian float32, frames x bins, row-major.
        std::ofstream bin(run.stage(stem + ".f32"), std::ios::binary);
        static_assert(std::endian::native == std::endian::little);
        const auto data = s.values.data();
        bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
        if (!bin) throw std::runtime_error("cannot write spectrogram");
    }
    const json sidecar = {{"dtype", "float32"},
                          {"byte_order", "little"},
                          {"shape", {s.frames(), s.bins()}},
                          {"axes", {"frame", "bin"}},
                          {"values", o.weighted ? "weighted_db" : "magnitude"},
                          {"hop_seconds", s.hop_seconds},
                          {"hop_samples", default_cqt().config().hop},
                          {"bin_frequencies_hz", s.bin_freqs}};
    run.write_text(stem + ".json", sidecar.dump(2) + "\n");
    run.commit(run_metadata("cqt", {{"input", o.input.generic_string()}, {"weighted", o.weighted}}));
}

void cmd_features(const Options& o)
{
    const auto manifest = training::read_manifest(o.manifest);
    const auto table = forest::excerpt_table(manifest, parse_split(o.split), o.silence_db, o.threads);
    cli::RunDirectory run(o.out);
    forest::write_feature_csv(run.stage("features_" + o.split + ".csv"), table, manifest);
    run.commit(run_metadata("features", {{"manifest", o.manifest.generic_string()},
                                         {"split", o.split},
                                         {"silence_db", o.silence_db},
                                         {"excerpts", table.features.size()},
                                         {"dropped_silent", table.dropped_silent}}));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Instrument recognition experiments on constant-Q spectrograms"};
    app.require_subcommand(1);
    Options o;

    auto out = [&](CLI::App* c, bool required = true) {
        auto* opt = c->add_option("--out", o.out, "Run directory for artifacts and run.json");
        if (required) opt->required();
    };
    auto manifest = [&](CLI::App* c) {
        c->add_option("--manifest", o.manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
    };
    auto common = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "Random seed");
        c->add_option("--threads", o.threads, "Worker threads (0: all cores)");
    };
    auto silence = [&](CLI::App* c) {
        c->add_option("--silence-db", o.silence_db, "Silence threshold in dB relative to full scale");
    };
    auto training_flags = [&](CLI::App* c) {
        c->add_option("--arch", o.arch, "Architecture name or JSON spec path");
        c->add_option("--epochs-cap", o.epochs_cap, "Maximum number of epochs");
        c->add_option("--epoch-size", o.epoch_size, "Samples per epoch");
        c->add_option("--lr", o.lr, "Adam learning rate");
        c->add_option("--time-budget", o.time_budget, "Wall-clock budget in seconds (0: none)");
    };

    auto* synth = app.add_subcommand("synth", "Generate the synthetic single-note corpus");
    out(synth);
    common(synth);
    synth->add_option("--instruments", o.corpus.instruments, "Instrument classes");
    synth->add_option("--pitches", o.corpus.pitches, "Semitone steps from the base pitch");
    synth->add_option("--duration", o.corpus.duration, "Seconds per note");

    auto* mfcc = app.add_subcommand("mfcc-distances", "MFCC distance distributions per grouping");
    manifest(mfcc);
    out(mfcc);
    common(mfcc);
    silence(mfcc);

    auto* count = app.add_subcommand("count-params", "Per-layer and total parameter counts");
    count->add_option("--arch", o.arch, "Architecture name or JSON spec path")->required();
    out(count, false);

    auto* train = app.add_subcommand("train", "Train a network");
    manifest(train);
    out(train);
    common(train);
    silence(train);
    training_flags(train);

    auto* evaluate = app.add_subcommand("evaluate", "Per-class accuracy of a checkpoint on the test split");
    manifest(evaluate);
    out(evaluate);
    common(evaluate);
    silence(evaluate);
    evaluate->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--arch", o.expect_arch, "Expected architecture (empty: accept the stored one)");

    auto* trials = app.add_subcommand("trials", "Repeated train + evaluate runs");
    manifest(trials);
    out(trials);
    common(trials);
    silence(trials);
    training_flags(trials);
    trials->add_option("--trials", o.trials, "Number of trials (seeds seed, seed+1, ...)");
    trials->add_option("--seeds", o.seeds, "Explicit seed list; overrides --trials");

    auto* baseline = app.add_subcommand("baseline", "Bag-of-features random forest");
    manifest(baseline);
    out(baseline);
    common(baseline);
    silence(baseline);
    baseline->add_option("--trees", o.trees, "Number of trees");

    auto* cqt = app.add_subcommand("cqt", "Constant-Q spectrogram of one WAV file");
    cqt->add_option("--input", o.input, "WAV file")->required()->check(CLI::ExistingFile);
    out(cqt);
    cqt->add_flag("--weighted", o.weighted, "Apply perceptual loudness weighting");

    auto* features = app.add_subcommand("features", "Bag-of-features table for one split");
    manifest(features);
    out(features);
    common(features);
    silence(features);
    features->add_option("--split", o.split, "train or test");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) cmd_synth(o);
        if (*mfcc) cmd_mfcc_distances(o);
        if (*count) cmd_count_params(o);
        if (*train) cmd_train(o);
        if (*evaluate) cmd_evaluate(o);
        if (*trials) cmd_trials(o);
        if (*baseline) cmd_baseline(o);
        if (*cqt) cmd_cqt(o);
        if (*features) cmd_features(o);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
