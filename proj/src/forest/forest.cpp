#include "timbre/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "timbre/cqt.hpp"
#include "timbre/errors.hpp"
#include "timbre/features.hpp"
#include "timbre/parallel.hpp"
#include "timbre/random.hpp"

namespace timbre::forest {

namespace {

// Below 24-bit resolution: nothing to describe.
constexpr double kSilentPeak = 1e-7;

void mean_std(const std::vector<double>& v, double& mean, double& sd)
{
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
}

void column_means(const FeatureMatrix& m, double* out)
{
    for (std::size_t c = 0; c < kMfccCount; ++c) {
        double s = 0.0;
        for (const auto& row : m) s += row[c];
        out[c] = s / static_cast<double>(m.size());
    }
}

struct Sample {
    std::size_t index;
    double weight;
};

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y, std::size_t n_classes,
                std::size_t max_features, std::mt19937_64& rng)
        : x_(x), y_(y), k_(n_classes), max_features_(max_features), rng_(rng), order_(x.front().size())
    {
        std::iota(order_.begin(), order_.end(), 0);
    }

    Tree build(std::vector<Sample> root)
    {
        struct Pending {
            std::size_t node;
            std::vector<Sample> samples;
        };
        std::vector<Pending> stack;
        stack.push_back({add_node(root), std::move(root)});
        while (!stack.empty()) {
            auto [node, samples] = std::move(stack.back());
            stack.pop_back();
            const auto& hist = tree_.value[node];
            const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
            const auto nonzero = std::count_if(hist.begin(), hist.end(), [](double v) { return v > 0.0; });
            if (nonzero <= 1 || total < 2.0) continue;
            const auto split = best_split(samples);
            if (!split) continue;
            std::vector<Sample> lo, hi;
            for (const auto& s : samples) (x_[s.index][split->feature] <= split->threshold ? lo : hi).push_back(s);
            tree_.feature[node] = static_cast<int>(split->feature);
            tree_.threshold[node] = split->threshold;
            const auto l = add_node(lo);
            const auto r = add_node(hi);
            tree_.left[node] = static_cast<int>(l);
            tree_.right[node] = static_cast<int>(r);
            // Right pushed first so the left subtree is expanded first.
            stack.push_back({r, std::move(hi)});
            stack.push_back({l, std::move(lo)});
        }
        return std::move(tree_);
    }

private:
    struct Split {
        std::size_t feature;
        double threshold;
    };

    std::size_t add_node(const std::vector<Sample>& samples)
    {
        std::vector<double> hist(k_, 0.0);
        for (const auto& s : samples) hist[y_[s.index]] += s.weight;
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0.0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.value.push_back(std::move(hist));
        return tree_.size() - 1;
    }

    // Maximizes sum_c L_c^2 / W_L + sum_c R_c^2 / W_R, which minimizes the
    // weighted Gini impurity of the children.
    std::optional<Split> best_split(std::vector<Sample>& samples)
    {
        std::optional<Split> best;
        double best_score = -1.0;
        std::size_t examined = 0;
        for (std::size_t i = 0; i < order_.size() && examined < max_features_; ++i) {
            const std::size_t j = std::uniform_int_distribution<std::size_t>(i, order_.size() - 1)(rng_);
            std::swap(order_[i], order_[j]);
            const std::size_t f = order_[i];
            std::sort(samples.begin(), samples.end(), [&](const Sample& a, const Sample& b) {
                const double va = x_[a.index][f], vb = x_[b.index][f];
                return va < vb || (va == vb && a.index < b.index);
            });
            if (x_[samples.front().index][f] == x_[samples.back().index][f]) continue;
            ++examined;

            std::vector<double> left(k_, 0.0), right(k_, 0.0);
            double wl = 0.0, wr = 0.0;
            for (const auto& s : samples) {
                right[y_[s.index]] += s.weight;
                wr += s.weight;
            }
            for (std::size_t p = 0; p + 1 < samples.size(); ++p) {
                const auto& s = samples[p];
                left[y_[s.index]] += s.weight;
                right[y_[s.index]] -= s.weight;
                wl += s.weight;
                wr -= s.weight;
                const double a = x_[s.index][f], b = x_[samples[p + 1].index][f];
                if (a == b) continue;
                double sl = 0.0, sr = 0.0;
                for (std::size_t c = 0; c < k_; ++c) {
                    sl += left[c] * left[c];
                    sr += right[c] * right[c];
                }
                const double score = sl / wl + (wr > 0.0 ? sr / wr : 0.0);
                if (score > best_score) {
                    best_score = score;
                    double t = a + (b - a) / 2.0;
                    if (t >= b) t = a; // adjacent doubles: keep b on the right
                    best = Split{f, t};
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<double>>& x_;
    const std::vector<std::size_t>& y_;
    std::size_t k_;
    std::size_t max_features_;
    std::mt19937_64& rng_;
    std::vector<std::size_t> order_;
    Tree tree_;
};

std::vector<double> json_doubles(const nlohmann::json& j)
{
    return j.get<std::vector<double>>();
}

} // namespace

const std::array<std::string, kFeatureCount>& feature_names()
{
    static const auto names = [] {
        std::array<std::string, kFeatureCount> n;
        std::size_t i = 0;
        for (const char* d : {"centroid", "bandwidth", "skewness", "rolloff", "zcr"}) {
            n[i++] = std::string(d) + "_mean";
            n[i++] = std::string(d) + "_std";
        }
        for (const char* prefix : {"mfcc", "dmfcc", "ddmfcc"}) {
            for (std::size_t c = 1; c <= kMfccCount; ++c) {
                n[i++] = prefix + std::string(c < 10 ? "0" : "") + std::to_string(c) + "_mean";
            }
        }
        return n;
    }();
    return names;
}

BagOfFeatures bag_of_features(const AudioBuffer& excerpt)
{
    if (excerpt.samples.size() < kExcerptSamples) {
        throw DimensionError("bag_of_features: excerpt has " + std::to_string(excerpt.samples.size()) +
                             " samples, needs at least " + std::to_string(kExcerptSamples));
    }
    BagOfFeatures out;
    double peak = 0.0;
    for (float s : excerpt.samples) peak = std::max(peak, static_cast<double>(std::abs(s)));
    if (peak < kSilentPeak) {
        out.silent = true;
        return out;
    }

    const auto desc = spectral_descriptors(excerpt);
    std::array<std::vector<double>, 5> series;
    for (const auto& d : desc) {
        series[0].push_back(d.centroid);
        series[1].push_back(d.bandwidth);
        series[2].push_back(d.skewness);
        series[3].push_back(d.rolloff);
        series[4].push_back(d.zcr);
    }
    for (std::size_t i = 0; i < series.size(); ++i) mean_std(series[i], out.values[2 * i], out.values[2 * i + 1]);

    const auto c = mfcc(excerpt, kMfccCount);
    const auto d1 = deltas(c);
    const auto d2 = deltas(d1);
    column_means(c, &out.values[10]);
    column_means(d1, &out.values[30]);
    column_means(d2, &out.values[50]);
    return out;
}

std::size_t Tree::leaf(std::span<const double> x) const
{
    std::size_t n = 0;
    while (feature[n] >= 0) {
        n = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[n])] <= threshold[n] ? left[n] : right[n]);
    }
    return n;
}

ForestModel forest_train(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y,
                         std::size_t n_classes, const ForestConfig& cfg)
{
    if (x.empty() || x.size() != y.size()) throw DimensionError("forest_train: need one label per feature row");
    const std::size_t d = x.front().size();
    if (d == 0) throw DimensionError("forest_train: empty feature rows");
    for (const auto& row : x) {
        if (row.size() != d) throw DimensionError("forest_train: ragged feature rows");
        for (double v : row) {
            if (!std::isfinite(v)) throw NumericError("forest_train: non-finite feature value");
        }
    }
    if (cfg.n_trees == 0) throw ParameterError("forest_train: n_trees must be positive");

    std::vector<std::size_t> counts(n_classes, 0);
    for (auto label : y) {
        if (label >= n_classes) throw IndexError("forest_train: label " + std::to_string(label) + " out of range");
        ++counts[label];
    }
    const auto present = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    if (present < 2) throw ParameterError("forest_train: at least two classes must be present");

    ForestModel m;
    m.n_features = d;
    m.n_classes = n_classes;
    m.class_weights.assign(n_classes, 1.0);
    if (cfg.balanced) {
        // n / (classes present * n_c): every present class carries equal total
        // weight and the mean sample weight is 1.
        for (std::size_t c = 0; c < n_classes; ++c) {
            m.class_weights[c] = counts[c] == 0 ? 0.0
                                                : static_cast<double>(y.size()) /
                                                      (static_cast<double>(present) * static_cast<double>(counts[c]));
        }
    }
    const std::size_t max_features =
        cfg.max_features != 0 ? std::min(cfg.max_features, d)
                              : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));

    m.trees.resize(cfg.n_trees);
    parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
        auto rng = derive_rng({cfg.seed, t});
        std::vector<std::size_t> draws(y.size(), 0);
        std::uniform_int_distribution<std::size_t> pick(0, y.size() - 1);
        for (std::size_t i = 0; i < y.size(); ++i) ++draws[pick(rng)];
        std::vector<Sample> root;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (draws[i] > 0) root.push_back({i, static_cast<double>(draws[i]) * m.class_weights[y[i]]});
        }
        m.trees[t] = TreeBuilder(x, y, n_classes, max_features, rng).build(std::move(root));
    });
    return m;
}

Prediction forest_predict(const ForestModel& model, std::span<const double> x)
{
    if (x.size() != model.n_features) {
        throw DimensionError("forest_predict: feature vector has length " + std::to_string(x.size()) + ", model expects " +
                             std::to_string(model.n_features));
    }
    if (model.trees.empty()) throw StateError("forest_predict: model has no trees");
    Prediction p;
    p.probabilities.assign(model.n_classes, 0.0);
    for (const auto& tree : model.trees) {
        const auto& hist = tree.value[tree.leaf(x)];
        const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
        for (std::size_t c = 0; c < model.n_classes; ++c) p.probabilities[c] += hist[c] / total;
    }
    for (auto& v : p.probabilities) v /= static_cast<double>(model.trees.size());
    p.label = static_cast<std::size_t>(std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
    return p;
}

nlohmann::json to_json(const ForestModel& model)
{
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        trees.push_back({{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left}, {"right", t.right}, {"value", t.value}});
    }
    return {{"n_features", model.n_features}, {"n_classes", model.n_classes}, {"class_weights", model.class_weights}, {"trees", trees}};
}

ForestModel forest_from_json(const nlohmann::json& j)
{
    try {
        ForestModel m;
        m.n_features = j.at("n_features").get<std::size_t>();
        m.n_classes = j.at("n_classes").get<std::size_t>();
        m.class_weights = json_doubles(j.at("class_weights"));
        for (const auto& tj : j.at("trees")) {
            Tree t;
            t.feature = tj.at("feature").get<std::vector<int>>();
            t.threshold = json_doubles(tj.at("threshold"));
            t.left = tj.at("left").get<std::vector<int>>();
            t.right = tj.at("right").get<std::vector<int>>();
            t.value = tj.at("value").get<std::vector<std::vector<double>>>();
            const auto n = t.feature.size();
            if (t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n || n == 0) {
                throw ParameterError("forest JSON: tree arrays differ in length");
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (t.feature[i] >= 0 &&
                    (static_cast<std::size_t>(t.feature[i]) >= m.n_features || t.left[i] <= static_cast<int>(i) ||
                     t.right[i] <= static_cast<int>(i) || static_cast<std::size_t>(t.left[i]) >= n ||
                     static_cast<std::size_t>(t.right[i]) >= n)) {
                    throw ParameterError("forest JSON: malformed node " + std::to_string(i));
                }
                if (t.value[i].size() != m.n_classes) throw ParameterError("forest JSON: histogram length mismatch");
            }
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed forest JSON: ") + e.what());
    }
}

} // namespace timbre::forest
