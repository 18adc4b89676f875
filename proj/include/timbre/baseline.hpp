#ifndef TIMBRE_BASELINE_HPP
#define TIMBRE_BASELINE_HPP

#include <filesystem>
#include <vector>

#include "timbre/dataset.hpp"
#include "timbre/forest.hpp"
#include "timbre/trainer.hpp"

namespace timbre::forest {

/// Bag-of-features rows for the half-overlapping 3 s windows (1.5 s hop) of
/// every file in one split, mostly-silent windows dropped.
struct ExcerptTable {
    std::vector<std::vector<double>> features;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> entries; // manifest row of each excerpt
    std::vector<double> start_seconds;
    std::size_t dropped_silent = 0;
};

ExcerptTable excerpt_table(const training::Manifest& manifest, training::Split split, double silence_db = -60.0,
                           std::size_t threads = 0);

struct BaselineResult {
    ForestModel model;
    training::EvalReport report;
    ExcerptTable train;
    ExcerptTable test;
};

/// Forest on the training excerpts, scored per test excerpt.
BaselineResult run_baseline(const training::Manifest& manifest, const ForestConfig& cfg, double silence_db = -60.0);

/// path,start_seconds,label followed by the 70 named feature columns.
void write_feature_csv(const std::filesystem::path& path, const ExcerptTable& table, const training::Manifest& manifest);

} // namespace timbre::forest

#endif
