#include <algorithm>
#include <cmath>

#include "timbre/distances.hpp"
#include "timbre/errors.hpp"

namespace timbre {

double squared_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw DimensionError("squared_distance: vectors of length " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

double quantile(std::span<const double> sorted, double q)
{
    if (sorted.empty()) throw DimensionError("quantile: empty sample");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

DistanceSummary summarize_distances(std::string grouping, std::string group_id, std::vector<double> distances)
{
    std::sort(distances.begin(), distances.end());
    DistanceSummary s{std::move(grouping), std::move(group_id)};
    s.decile10 = quantile(distances, 0.1);
    s.q25 = quantile(distances, 0.25);
    s.median = quantile(distances, 0.5);
    s.q75 = quantile(distances, 0.75);
    s.decile90 = quantile(distances, 0.9);
    s.n_pairs = distances.size();
    return s;
}

DistanceReport cluster_distances(std::span<const LabeledVector> vectors, const std::vector<std::string>& keys)
{
    if (keys.empty()) throw ParameterError("cluster_distances: at least one grouping key is required");
    std::string grouping;
    for (const auto& k : keys) grouping += (grouping.empty() ? "" : "+") + k;

    auto label = [&](const LabeledVector& v, const std::string& key) -> const std::string& {
        const auto it = v.labels.find(key);
        if (it == v.labels.end()) throw ParameterError("cluster_distances: vector lacks label '" + key + "'");
        return it->second;
    };

    // Full key tuple -> member indices, ordered by outer key first.
    std::map<std::vector<std::string>, std::vector<std::size_t>> tuples;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        std::vector<std::string> t;
        for (const auto& k : keys) t.push_back(label(vectors[i], k));
        tuples[t].push_back(i);
    }

    DistanceReport report;
    std::map<std::string, std::vector<double>> pooled;
    std::vector<std::string> order;
    for (const auto& [tuple, members] : tuples) {
        const auto& outer = tuple.front();
        if (!pooled.contains(outer)) order.push_back(outer);
        auto& d = pooled[outer];
        if (members.size() < 2) {
            std::string id;
            for (const auto& part : tuple) id += (id.empty() ? "" : "+") + part;
            report.warnings.push_back(grouping + " group " + id + " has a single member; skipped");
            continue;
        }
        for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                d.push_back(squared_distance(vectors[members[a]].values, vectors[members[b]].values));
            }
        }
    }
    for (const auto& outer : order) {
        auto& d = pooled[outer];
        if (d.empty()) {
            report.warnings.push_back(grouping + " group " + outer + " has no pairs; skipped");
            continue;
        }
        report.rows.push_back(summarize_distances(grouping, outer, std::move(d)));
    }
    return report;
}

void write_distance_csv(std::ostream& out, std::span<const DistanceSummary> rows)
{
    out << "grouping,group_id,decile10,q25,median,q75,decile90,n_pairs\n";
    out.precision(9);
    for (const auto& r : rows) {
        out << r.grouping << ',' << r.group_id << ',' << r.decile10 << ',' << r.q25 << ',' << r.median << ','
            << r.q75 << ',' << r.decile90 << ',' << r.n_pairs << '\n';
    }
}

} // namespace timbre
