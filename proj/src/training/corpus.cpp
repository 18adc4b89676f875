#include "timbre/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"
#include "timbre/features.hpp"
#include "timbre/parallel.hpp"
#include "timbre/random.hpp"
#include "timbre/synth.hpp"

namespace timbre::training {

Manifest generate_corpus(const std::filesystem::path& out, const CorpusConfig& cfg)
{
    const auto& presets = instrument_presets();
    if (cfg.instruments == 0 || cfg.instruments > presets.size() || cfg.instruments > kClasses) {
        throw ParameterError("corpus: instrument count must be in [1, " + std::to_string(presets.size()) + "]");
    }
    if (cfg.pitches == 0 || cfg.nuances_db.empty()) throw ParameterError("corpus: needs at least one pitch and nuance");
    if (cfg.test_every == 1) throw ParameterError("corpus: test_every = 1 leaves no training data");

    Manifest m;
    for (std::size_t i = 0; i < cfg.instruments; ++i) {
        for (std::size_t p = 0; p < cfg.pitches; ++p) {
            for (std::size_t n = 0; n < cfg.nuances_db.size(); ++n) {
                ManifestEntry e;
                const auto& name = presets[i].name;
                char file[96];
                std::snprintf(file, sizeof file, "%s_p%02zu_n%zu.wav", name.c_str(), p, n);
                e.path = out / name / file;
                e.label = i;
                const bool test = cfg.test_every > 0 && p % cfg.test_every == cfg.test_every - 1;
                e.split = test ? Split::test : Split::train;
                e.instrument = name;
                e.pitch = static_cast<int>(p);
                e.nuance = std::to_string(n);
                m.entries.push_back(std::move(e));
            }
        }
        m.class_names[i] = presets[i].name;
    }

    for (std::size_t i = 0; i < cfg.instruments; ++i) std::filesystem::create_directories(out / presets[i].name);
    parallel_for(m.entries.size(), cfg.threads, [&](std::size_t j) {
        const auto& e = m.entries[j];
        const auto p = static_cast<std::size_t>(*e.pitch);
        const std::size_t n = j % cfg.nuances_db.size();
        const double f0 = cfg.base_hz * std::pow(2.0, static_cast<double>(p) / 12.0);
        auto rng = derive_rng({cfg.seed, e.label, p, n});
        write_wav(e.path, synth_tone(preset_tone(e.label, f0, cfg.nuances_db[n], cfg.duration), rng), SampleFormat::float32);
    });
    write_manifest(out / "manifest.csv", m);
    return m;
}

std::vector<double> note_mfcc(const AudioBuffer& audio, double silence_db)
{
    constexpr std::size_t kKeep = 12;
    const StftConfig stft;
    const auto frames = mfcc(audio, kKeep, stft);
    const auto silent = detect_silence(audio, silence_db, stft.hop);
    std::vector<double> sum(kKeep, 0.0);
    std::size_t used = 0;
    for (int pass = 0; pass < 2 && used == 0; ++pass) {
        for (std::size_t f = 0; f < frames.size(); ++f) {
            // Frame f spans silence blocks [f, f + frame/hop).
            bool quiet = pass == 0;
            for (std::size_t b = f; quiet && b < f + stft.frame / stft.hop && b < silent.size(); ++b) quiet = silent[b];
            if (quiet) continue;
            for (std::size_t c = 0; c < kKeep; ++c) sum[c] += frames[f][c];
            ++used;
        }
    }
    for (auto& v : sum) v /= static_cast<double>(used);
    return sum;
}

MfccStudy mfcc_distance_study(const Manifest& manifest, double silence_db, std::size_t threads)
{
    for (const auto& e : manifest.entries) {
        if (e.instrument.empty() || !e.pitch || e.nuance.empty()) {
            throw DatasetError("mfcc distances: " + e.path.string() + " lacks instrument, pitch or nuance");
        }
    }
    std::vector<LabeledVector> notes(manifest.entries.size());
    parallel_for(notes.size(), threads, [&](std::size_t i) {
        const auto& e = manifest.entries[i];
        notes[i].values = note_mfcc(load_audio(e.path), silence_db);
        notes[i].labels = {{"instrument", e.instrument}, {"pitch", std::to_string(*e.pitch)}, {"nuance", e.nuance}};
    });

    MfccStudy study;
    std::map<std::string, double> all_median;
    for (const auto& keys : {std::vector<std::string>{"instrument"},
                                                 std::vector<std::string>{"instrument", "pitch"},
                                                 std::vector<std::string>{"instrument", "nuance"}}) {
        auto report = cluster_distances(notes, keys);
        for (auto& r : report.rows) {
            if (keys.size() == 1) all_median[r.group_id] = r.median;
            if (keys.size() == 2 && keys[1] == "pitch" && all_median.contains(r.group_id)) {
                study.pitch_ratio[r.group_id] = r.median > 0.0 ? all_median[r.group_id] / r.median
                                                               : std::numeric_limits<double>::infinity();
            }
            study.rows.push_back(std::move(r));
        }
        for (auto& w : report.warnings) study.warnings.push_back(std::move(w));
    }
    return study;
}

} // namespace timbre::training
