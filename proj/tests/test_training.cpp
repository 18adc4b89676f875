#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "timbre/errors.hpp"
#include "timbre/trainer.hpp"

using namespace timbre;
using namespace timbre::training;

namespace {

AudioBuffer tone(double freq, double seconds, std::uint64_t seed, double silent_lead = 0.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1e-3);
    AudioBuffer a;
    a.sample_rate = kSampleRate;
    const auto n = static_cast<std::size_t>(seconds * kSampleRate);
    const auto lead = static_cast<std::size_t>(silent_lead * kSampleRate);
    a.samples.resize(n, 0.0f);
    for (std::size_t i = lead; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        a.samples[i] = static_cast<float>(0.3 * std::sin(2 * std::numbers::pi * freq * t) + noise(rng));
    }
    return a;
}

// Class k is a tone half an octave above class k-1: separable by pitch alone.
std::vector<Recording> separable_recordings(std::size_t per_class, double seconds, std::uint64_t seed)
{
    std::vector<Recording> out;
    for (std::size_t k = 0; k < kClasses; ++k) {
        for (std::size_t j = 0; j < per_class; ++j) {
            const double f = 110.0 * std::pow(2.0, static_cast<double>(k) / 2.0) * (1.0 + 0.01 * static_cast<double>(j));
            out.push_back(analyze_recording(tone(f, seconds, seed + 31 * k + j), k, -60.0));
        }
    }
    return out;
}

arch::NetworkSpec tiny_net()
{
    using arch::LayerKind;
    arch::LayerSpec conv{LayerKind::conv2d, 3, 3, 4};
    arch::LayerSpec pool{LayerKind::maxpool, 5, 6};
    arch::LayerSpec hidden{LayerKind::dense};
    hidden.channels = 16;
    arch::LayerSpec out{LayerKind::dense};
    out.channels = kClasses;
    out.bias = false;
    return {"tiny",
            {{"2d", arch::kFullCrop, {conv, {LayerKind::relu}, pool, {LayerKind::flatten}}}},
            {{LayerKind::concat}, {LayerKind::dropout}, hidden, {LayerKind::relu}, {LayerKind::dropout}, out, {LayerKind::softmax}}};
}

TrainConfig quick_config(std::uint64_t seed = 7)
{
    TrainConfig cfg;
    cfg.epoch_size = 512;
    cfg.max_epochs = 4;
    cfg.seed = seed;
    cfg.learning_rate = 3e-3;
    return cfg;
}

const Dataset& separable_train()
{
    static const Dataset d(separable_recordings(2, 3.5, 100));
    return d;
}

const Dataset& separable_test()
{
    static const Dataset d(separable_recordings(1, 4.6, 900));
    return d;
}

std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("timbre_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string full_manifest(const std::string& extra_rows = "")
{
    std::string csv = "path,label,split,artist\n";
    for (int k = 0; k < 8; ++k) csv += "a" + std::to_string(k) + ".wav," + std::to_string(k) + ",train,p" + std::to_string(k) + "\n";
    return csv + extra_rows;
}

} // namespace

// Manifest -----------------------------------------------------------------

TEST(Manifest, ParsesRelativePathsAndOptionalColumns)
{
    const auto m = parse_manifest("path,label,split,class_name,pitch\n"
                                  "x/a.wav,3,test,flute,45\n"
                                  "/abs/b.wav,0,train,\"brass, bright\",\n",
                                  "/data");
    ASSERT_EQ(m.entries.size(), 2u);
    EXPECT_EQ(m.entries[0].path, std::filesystem::path("/data/x/a.wav"));
    EXPECT_EQ(m.entries[0].split, Split::test);
    EXPECT_EQ(m.entries[0].pitch, 45);
    EXPECT_EQ(m.entries[1].path, std::filesystem::path("/abs/b.wav"));
    EXPECT_FALSE(m.entries[1].pitch.has_value());
    EXPECT_EQ(m.class_names[3], "flute");
    EXPECT_EQ(m.class_names[0], "brass, bright");
    EXPECT_EQ(m.class_names[5], "class5");
}

TEST(Manifest, RejectsMalformedRows)
{
    EXPECT_THROW(parse_manifest("path,split\na.wav,train\n", "."), DatasetError);
    EXPECT_THROW(parse_manifest("path,label,split\na.wav,8,train\n", "."), DatasetError);
    EXPECT_THROW(parse_manifest("path,label,split\na.wav,x,train\n", "."), DatasetError);
    EXPECT_THROW(parse_manifest("path,label,split\na.wav,1,dev\n", "."), DatasetError);
    EXPECT_THROW(parse_manifest("path,label,split\na.wav,1\n", "."), DatasetError);
    EXPECT_THROW(parse_manifest("path,label,split,class_name\na.wav,1,train,x\nb.wav,1,train,y\n", "."), DatasetError);
}

TEST(Manifest, ValidationGuards)
{
    EXPECT_NO_THROW(validate_manifest(parse_manifest(full_manifest(), "/d")));

    auto missing = parse_manifest(full_manifest(), "/d");
    missing.entries.erase(missing.entries.begin() + 5);
    try {
        validate_manifest(missing);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("class 5"), std::string::npos);
    }

    EXPECT_THROW(validate_manifest(parse_manifest(full_manifest("a3.wav,3,test,q\n"), "/d")), DatasetError);
    EXPECT_THROW(validate_manifest(parse_manifest(full_manifest("z.wav,2,test,p2\n"), "/d")), DatasetError);
    EXPECT_NO_THROW(validate_manifest(parse_manifest(full_manifest("z.wav,2,test,q\n"), "/d")));
}

TEST(Manifest, WriteReadRoundTrip)
{
    const auto dir = temp_dir("manifest");
    auto m = parse_manifest(full_manifest("sub/z.wav,2,test,q\n"), dir);
    m.entries.back().pitch = 12;
    m.entries.back().nuance = "ff";
    write_manifest(dir / "m.csv", m);
    const auto back = read_manifest(dir / "m.csv");
    ASSERT_EQ(back.entries.size(), m.entries.size());
    EXPECT_EQ(back.entries.back().path, dir / "sub/z.wav");
    EXPECT_EQ(back.entries.back().pitch, 12);
    EXPECT_EQ(back.entries.back().nuance, "ff");
    EXPECT_EQ(back.class_names, m.class_names);
    std::filesystem::remove_all(dir);
}

// Sampling -----------------------------------------------------------------

TEST(Sampling, SilentFractionCountsOverlappingFrames)
{
    const std::vector<bool> mask{true, false, false, true};
    EXPECT_DOUBLE_EQ(silent_fraction(mask, 0, 4096), 0.5);
    EXPECT_DOUBLE_EQ(silent_fraction(mask, 1024, 2048), 0.0);
    EXPECT_DOUBLE_EQ(silent_fraction(mask, 1000, 100), 0.5); // straddles frames 0 and 1
    EXPECT_DOUBLE_EQ(silent_fraction(mask, 1000, 24), 1.0);
    EXPECT_DOUBLE_EQ(silent_fraction(mask, 2048, 5000), 0.5); // clipped at the end
}

TEST(Sampling, ThreeSecondFileAlwaysGivesItsOnlyWindow)
{
    auto r = analyze_recording(tone(440.0, 3.0, 1), 2, -60.0);
    ASSERT_EQ(r.valid_starts, (std::vector<std::size_t>{0}));
    std::vector<Recording> recs(kClasses);
    for (std::size_t k = 0; k < kClasses; ++k) {
        recs[k] = r;
        recs[k].label = k;
    }
    const Dataset d(std::move(recs));
    std::mt19937_64 rng(1);
    const auto first = d.sample_excerpt(2, rng);
    EXPECT_EQ(first.shape(), (Shape{128, 96}));
    for (int i = 0; i < 20; ++i) EXPECT_EQ(d.sample_excerpt(2, rng), first);
}

TEST(Sampling, LeadingSilenceIsAvoided)
{
    // 6 s file whose first 3 s are digital silence.
    const auto r = analyze_recording(tone(330.0, 6.0, 2, 3.0), 0, -60.0);
    ASSERT_FALSE(r.valid_starts.empty());
    for (auto b : r.valid_starts) {
        EXPECT_LT(silent_fraction(r.silent, b * 1024, kExcerptSamples), 0.5);
        EXPECT_GT(b * 1024 + kExcerptSamples, 3 * 44100 + kExcerptSamples / 2);
    }
    std::vector<Recording> recs(kClasses, r);
    for (std::size_t k = 0; k < kClasses; ++k) recs[k].label = k;
    const Dataset d(std::move(recs));
    std::mt19937_64 rng(3);
    std::set<std::string> distinct;
    for (int i = 0; i < 1000; ++i) {
        const auto x = d.sample_excerpt(0, rng);
        // The newest frame must carry the tone, not the floor.
        float last_max = -1e30f;
        for (std::size_t k = 0; k < 96; ++k) last_max = std::max(last_max, x(127, k));
        float first_min = 1e30f, last_min = 1e30f;
        for (std::size_t k = 0; k < 96; ++k) {
            first_min = std::min(first_min, x(0, k));
            last_min = std::min(last_min, x(127, k));
        }
        EXPECT_GT(last_max, last_min + 40.0f);
        distinct.insert(std::to_string(first_min));
    }
    EXPECT_GT(distinct.size(), 1u);
}

TEST(Sampling, CropsMatchStandaloneTransform)
{
    const auto audio = tone(523.25, 5.0, 4);
    const auto r = analyze_recording(audio, 0, -60.0);
    const std::size_t b = 40;
    AudioBuffer slice{std::vector<float>(audio.samples.begin() + b * 1024, audio.samples.begin() + b * 1024 + kExcerptSamples),
                      kSampleRate};
    const auto alone = cqt(slice).values;
    const auto cropped = crop_frames(r.magnitude, b + 1, 128).values;
    double peak = 0.0, worst = 0.0;
    for (float v : alone.data()) peak = std::max(peak, static_cast<double>(v));
    // Frames far enough from the slice edges see identical samples.
    for (std::size_t t = 16; t < 112; ++t) {
        for (std::size_t k = 0; k < 96; ++k) worst = std::max(worst, std::abs(static_cast<double>(alone(t, k) - cropped(t, k))));
    }
    EXPECT_LT(worst, 1e-4 * peak);
}

TEST(Sampling, UnusableClassIsReported)
{
    auto recs = separable_recordings(1, 3.2, 5);
    recs[4].valid_starts.clear();
    const Dataset d(std::move(recs));
    std::mt19937_64 rng(1);
    EXPECT_THROW(d.sample_excerpt(4, rng), DatasetError);
    EXPECT_THROW(train(tiny_net(), d, quick_config()), DatasetError);
}

TEST(Batches, EveryBatchIsClassBalanced)
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        const auto b = sample_batch(separable_train(), 4, rng);
        EXPECT_EQ(b.inputs.shape(), (Shape{32, 128, 96}));
        std::array<int, kClasses> count{};
        for (auto l : b.labels) ++count[l];
        for (int c : count) EXPECT_EQ(c, 4);
    }
}

TEST(Batches, GlobalNormalization)
{
    std::mt19937_64 rng(6);
    auto b = sample_batch(separable_train(), 4, rng);
    Tensor affine = b.inputs;
    for (auto& v : affine.data()) v = 3.0f * v + 7.0f;
    normalize_batch(b.inputs);
    double s = 0.0, ss = 0.0;
    for (float v : b.inputs.data()) s += v;
    const double mean = s / static_cast<double>(b.inputs.size());
    for (float v : b.inputs.data()) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(ss / static_cast<double>(b.inputs.size()), 1.0, 1e-5);

    normalize_batch(affine);
    for (std::size_t i = 0; i < affine.size(); ++i) ASSERT_NEAR(affine[i], b.inputs[i], 1e-4f);

    Tensor flat({2, 3}, 4.0f);
    EXPECT_THROW(normalize_batch(flat), NumericError);
}

// Training -----------------------------------------------------------------

TEST(Training, StoppingRule)
{
    const std::vector<double> seq{2.0, 1.5, 1.5};
    std::size_t fired = 0;
    for (std::size_t e = 1; e <= seq.size(); ++e) {
        if (loss_plateaued(std::span(seq).first(e))) {
            fired = e;
            break;
        }
    }
    EXPECT_EQ(fired, 3u);
    EXPECT_FALSE(loss_plateaued(std::vector<double>{1.0}));
    EXPECT_TRUE(loss_plateaued(std::vector<double>{1.0, 1.2}));
    EXPECT_FALSE(loss_plateaued(std::vector<double>{1.0, 0.999}));
}

TEST(Training, BatchLossMatchesStandaloneForward)
{
    std::mt19937_64 rng(8);
    const auto spec = tiny_net();
    const auto params = arch::init_params(spec, rng);
    auto b = sample_batch(separable_train(), 1, rng);
    normalize_batch(b.inputs);
    std::vector<Tensor> grads;
    const double loss = batch_gradients(spec, params, b, std::nullopt, grads, 1);

    double expected = 0.0;
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        Tensor x({128, 96});
        std::copy_n(b.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * 128 * 96), 128 * 96, x.data().begin());
        expected -= std::log(static_cast<double>(arch::forward(spec, params, x)[b.labels[i]]));
    }
    EXPECT_NEAR(loss, expected / static_cast<double>(b.labels.size()), 1e-5);
}

TEST(Training, GradientsIndependentOfThreadCount)
{
    std::mt19937_64 rng(9);
    const auto spec = tiny_net();
    const auto params = arch::init_params(spec, rng);
    auto b = sample_batch(separable_train(), 2, rng);
    normalize_batch(b.inputs);
    std::vector<Tensor> g1, g4;
    const double l1 = batch_gradients(spec, params, b, 77, g1, 1);
    const double l4 = batch_gradients(spec, params, b, 77, g4, 4);
    EXPECT_EQ(l1, l4);
    EXPECT_EQ(g1, g4);
    std::vector<Tensor> other;
    batch_gradients(spec, params, b, 78, other, 1);
    EXPECT_NE(g1, other); // the dropout stream depends on the seed
}

TEST(Training, LearnsSeparableClasses)
{
    auto cfg = quick_config();
    cfg.max_epochs = 6;
    std::vector<double> seen;
    const auto r = train(tiny_net(), separable_train(), cfg, [&](const EpochReport& e) { seen.push_back(e.mean_loss); });
    EXPECT_EQ(seen, r.epoch_losses);
    ASSERT_GE(r.epoch_losses.size(), 3u);
    EXPECT_LE(r.epoch_losses[1], r.epoch_losses[0]);
    EXPECT_LE(r.epoch_losses[2], r.epoch_losses[1]);
    EXPECT_LT(r.epoch_losses.back(), 0.1);
    EXPECT_EQ(r.steps, r.epoch_losses.size() * 16);

    const auto report = evaluate({r.spec, r.params, r.input_stats}, separable_test());
    for (std::size_t k = 0; k < kClasses; ++k) {
        EXPECT_EQ(report.total[k], 2u);
        EXPECT_EQ(report.accuracy(k), 100.0) << k;
    }
}

TEST(Training, SameSeedGivesIdenticalCheckpoints)
{
    auto cfg = quick_config(11);
    cfg.max_epochs = 2;
    const auto a = train(tiny_net(), separable_train(), cfg);
    const auto b = train(tiny_net(), separable_train(), cfg);
    const std::array<std::string, kClasses> names{"a", "b", "c", "d", "e", "f", "g", "h"};
    EXPECT_EQ(ad::encode_checkpoint(to_checkpoint(a, cfg, names)), ad::encode_checkpoint(to_checkpoint(b, cfg, names)));
    cfg.seed = 12;
    const auto c = train(tiny_net(), separable_train(), cfg);
    EXPECT_NE(c.params, a.params);
}

TEST(Training, CapAndBudgetStopTheRun)
{
    auto cfg = quick_config();
    cfg.max_epochs = 1;
    EXPECT_EQ(train(tiny_net(), separable_train(), cfg).reason, StopReason::max_epochs);
    cfg.max_epochs = 50;
    cfg.time_budget_seconds = 1e-6;
    const auto r = train(tiny_net(), separable_train(), cfg);
    EXPECT_EQ(r.reason, StopReason::time_budget);
    EXPECT_EQ(r.epoch_losses.size(), 1u);
}

TEST(Training, DivergenceAborts)
{
    auto cfg = quick_config();
    cfg.learning_rate = 1e36;
    EXPECT_THROW(train(tiny_net(), separable_train(), cfg), NumericError);
}

TEST(Training, RejectsBadConfig)
{
    auto cfg = quick_config();
    cfg.batch_size = 30;
    EXPECT_THROW(train(tiny_net(), separable_train(), cfg), ParameterError);
    cfg = quick_config();
    cfg.epoch_size = 100;
    EXPECT_THROW(train(tiny_net(), separable_train(), cfg), ParameterError);
}

TEST(Checkpoints, RoundTripGivesBitIdenticalOutputs)
{
    auto cfg = quick_config();
    cfg.max_epochs = 1;
    const auto r = train(tiny_net(), separable_train(), cfg);
    const auto dir = temp_dir("ckpt");
    ad::save_checkpoint(dir / "m.ckpt", to_checkpoint(r, cfg, {}));
    const auto m = from_checkpoint(ad::load_checkpoint(dir / "m.ckpt"));
    EXPECT_EQ(m.spec, r.spec);
    EXPECT_EQ(m.input_stats.mean, r.input_stats.mean);
    std::mt19937_64 rng(1);
    const auto x = separable_test().sample_excerpt(3, rng);
    EXPECT_EQ(arch::forward(m.spec, m.params, x), arch::forward(r.spec, r.params, x));

    const auto other = arch::build_1d();
    EXPECT_THROW(from_checkpoint(ad::load_checkpoint(dir / "m.ckpt"), &other), ParameterError);
    std::filesystem::remove_all(dir);
}

// Evaluation ---------------------------------------------------------------

TEST(Evaluation, WindowArithmetic)
{
    EXPECT_EQ(eval_window_count(463050), 6u); // 10.5 s
    EXPECT_EQ(eval_window_count(132300), 1u);
    EXPECT_EQ(eval_window_count(132299), 0u);
    EXPECT_EQ(eval_window_count(198449), 1u);
    EXPECT_EQ(eval_window_count(198450), 2u);
}

TEST(Evaluation, ArgmaxTiesGoToLowestIndex)
{
    EXPECT_EQ(argmax(std::vector<float>{0.2f, 0.5f, 0.5f}), 1u);
    EXPECT_EQ(argmax(std::vector<float>(8, 0.125f)), 0u);
}

TEST(Evaluation, ZeroModelPredictsClassZero)
{
    TrainedModel m{tiny_net(), {}, {}};
    for (const auto& p : arch::param_layout(m.spec)) m.params.emplace_back(p.shape);
    const auto report = evaluate(m, separable_test());
    EXPECT_EQ(report.accuracy(0), 100.0);
    for (std::size_t k = 1; k < kClasses; ++k) EXPECT_EQ(report.accuracy(k), 0.0);
    EXPECT_DOUBLE_EQ(report.mean_accuracy(), 12.5);
}

TEST(Evaluation, SilentWindowsAreDroppedAndAbsentClassesReported)
{
    auto recs = separable_recordings(1, 4.6, 50);
    recs.resize(3);
    // 6 s with 4 s of leading silence: windows at 0 and 1.5 s are mostly silent.
    recs.push_back(analyze_recording(tone(200.0, 6.0, 3, 4.0), 1, -60.0));
    const Dataset test(std::move(recs));
    TrainedModel m{tiny_net(), {}, {}};
    for (const auto& p : arch::param_layout(m.spec)) m.params.emplace_back(p.shape);
    const auto report = evaluate(m, test);
    EXPECT_EQ(report.dropped_silent, 2u);
    EXPECT_EQ(report.total[1], 3u);
    EXPECT_FALSE(report.accuracy(5).has_value());

    const auto dir = temp_dir("acc");
    write_accuracy_csv(dir / "acc.csv", report, {"a", "b", "c", "d", "e", "f", "g", "h"});
    std::ifstream in(dir / "acc.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 10u);
    EXPECT_EQ(lines[0], "class,accuracy,stddev,n_excerpts");
    EXPECT_EQ(lines[6], "f,NA,NA,0");
    EXPECT_TRUE(lines[9].starts_with("average,"));
    std::filesystem::remove_all(dir);
}

TEST(Trials, IdenticalSeedsGiveZeroDeviation)
{
    auto cfg = quick_config();
    cfg.max_epochs = 1;
    const std::vector<std::uint64_t> same{5, 5};
    const auto s = repeated_trials(tiny_net(), separable_train(), separable_test(), cfg, same);
    for (std::size_t k = 0; k < kClasses; ++k) EXPECT_EQ(s.stddev[k], 0.0);
    EXPECT_EQ(s.average_stddev, 0.0);
    EXPECT_THROW(repeated_trials(tiny_net(), separable_train(), separable_test(), cfg, std::vector<std::uint64_t>{1}),
                 ParameterError);
}
