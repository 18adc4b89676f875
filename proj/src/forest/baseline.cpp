#include "timbre/baseline.hpp"

#include <cstdio>
#include <fstream>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"
#include "timbre/features.hpp"
#include "timbre/parallel.hpp"

namespace timbre::forest {

ExcerptTable excerpt_table(const training::Manifest& manifest, training::Split split, double silence_db, std::size_t threads)
{
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (manifest.entries[i].split == split) rows.push_back(i);
    }
    struct FileRows {
        std::vector<std::vector<double>> features;
        std::vector<double> starts;
        std::size_t dropped = 0;
    };
    std::vector<FileRows> per_file(rows.size());
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        const auto audio = load_audio(manifest.entries[rows[i]].path);
        const auto silent = detect_silence(audio, silence_db);
        auto& out = per_file[i];
        for (std::size_t w = 0; w < training::eval_window_count(audio.samples.size()); ++w) {
            const std::size_t start = w * training::kEvalHopSamples;
            if (training::silent_fraction(silent, start, kExcerptSamples) >= training::kMaxSilentFraction) {
                ++out.dropped;
                continue;
            }
            AudioBuffer excerpt{{audio.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                 audio.samples.begin() + static_cast<std::ptrdiff_t>(start + kExcerptSamples)},
                                audio.sample_rate};
            const auto bag = bag_of_features(excerpt);
            out.features.emplace_back(bag.values.begin(), bag.values.end());
            out.starts.push_back(static_cast<double>(start) / audio.sample_rate);
        }
    });
    ExcerptTable t;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& f = per_file[i];
        for (std::size_t j = 0; j < f.features.size(); ++j) {
            t.features.push_back(std::move(f.features[j]));
            t.labels.push_back(manifest.entries[rows[i]].label);
            t.entries.push_back(rows[i]);
            t.start_seconds.push_back(f.starts[j]);
        }
        t.dropped_silent += f.dropped;
    }
    return t;
}

BaselineResult run_baseline(const training::Manifest& manifest, const ForestConfig& cfg, double silence_db)
{
    BaselineResult r;
    r.train = excerpt_table(manifest, training::Split::train, silence_db, cfg.threads);
    r.test = excerpt_table(manifest, training::Split::test, silence_db, cfg.threads);
    if (r.train.features.empty()) throw DatasetError("baseline: no usable training excerpt");
    r.model = forest_train(r.train.features, r.train.labels, training::kClasses, cfg);
    r.report.dropped_silent = r.test.dropped_silent;
    for (std::size_t i = 0; i < r.test.features.size(); ++i) {
        const auto label = r.test.labels[i];
        const auto pred = forest_predict(r.model, r.test.features[i]).label;
        r.report.predictions.push_back(pred);
        r.report.truths.push_back(label);
        ++r.report.total[label];
        if (pred == label) ++r.report.correct[label];
    }
    return r;
}

void write_feature_csv(const std::filesystem::path& path, const ExcerptTable& table, const training::Manifest& manifest)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "path,start_seconds,label";
    for (const auto& n : feature_names()) out << ',' << n;
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < table.features.size(); ++i) {
        out << manifest.entries[table.entries[i]].path.generic_string() << ',' << table.start_seconds[i] << ',' << table.labels[i];
        for (double v : table.features[i]) {
            std::snprintf(buf, sizeof buf, ",%.9g", v);
            out << buf;
        }
        out << '\n';
    }
}

} // namespace timbre::forest
