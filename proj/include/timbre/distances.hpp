#ifndef TIMBRE_DISTANCES_HPP
#define TIMBRE_DISTANCES_HPP

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace timbre {

struct LabeledVector {
    std::vector<double> values;
    std::map<std::string, std::string> labels;
};

struct DistanceSummary {
    std::string grouping;
    std::string group_id;
    double decile10 = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double decile90 = 0.0;
    std::size_t n_pairs = 0;
};

struct DistanceReport {
    std::vector<DistanceSummary> rows;
    std::vector<std::string> warnings;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Linear interpolation between order statistics; `sorted` must be ascending and non-empty.
double quantile(std::span<const double> sorted, double q);

DistanceSummary summarize_distances(std::string grouping, std::string group_id, std::vector<double> distances);

/// One row per value of labels[keys[0]]. The row pools the squared
/// distances of every pair that agrees on all of `keys`, so {"instrument",
/// "pitch"} summarizes same-pitch pairs within each instrument. Tuples with
/// a single member contribute no pairs and are reported in `warnings`; an
/// outer group left with no pairs is skipped.
DistanceReport cluster_distances(std::span<const LabeledVector> vectors, const std::vector<std::string>& keys);

/// Header: grouping,group_id,decile10,q25,median,q75,decile90,n_pairs
void write_distance_csv(std::ostream& out, std::span<const DistanceSummary> rows);

} // namespace timbre

#endif
