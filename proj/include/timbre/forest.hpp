#ifndef TIMBRE_FOREST_HPP
#define TIMBRE_FOREST_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "timbre/audio.hpp"

namespace timbre::forest {

// Bag of features ----------------------------------------------------------
//
// Slot order of the 70-dimensional summary of one excerpt:
//    0- 7  spectral centroid, bandwidth, skewness, rolloff: mean then std each
//    8- 9  zero-crossing rate: mean, std
//   10-29  MFCC 1..20 means
//   30-49  delta-MFCC 1..20 means
//   50-69  delta-delta-MFCC 1..20 means
// Frames are 2048 samples with a 1024 hop; standard deviations are population.

inline constexpr std::size_t kFeatureCount = 70;
inline constexpr std::size_t kMfccCount = 20;

struct BagOfFeatures {
    std::array<double, kFeatureCount> values{};
    bool silent = false; // every value is zero when set
};

/// Column names in slot order.
const std::array<std::string, kFeatureCount>& feature_names();

/// Throws DimensionError when the excerpt is shorter than 3 s.
BagOfFeatures bag_of_features(const AudioBuffer& excerpt);

// Random forest ------------------------------------------------------------

/// Flat CART tree. Node i is a leaf when feature[i] < 0; otherwise samples
/// with x[feature] <= threshold go to left[i], the rest to right[i].
/// value[i] holds the weighted class histogram of the samples reaching node i.
struct Tree {
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<std::vector<double>> value;

    [[nodiscard]] std::size_t size() const { return feature.size(); }
    /// Index of the leaf reached by x.
    [[nodiscard]] std::size_t leaf(std::span<const double> x) const;
};

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_features = 0; // 0: floor(sqrt(n_features))
    bool balanced = true;         // inverse-frequency sample weights
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

struct ForestModel {
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    std::vector<double> class_weights;
    std::vector<Tree> trees;
};

/// Every tree sees a bootstrap resample drawn from its own generator, keyed
/// by (seed, tree index), so the forest does not depend on the thread count.
/// Nodes split on the Gini-best midpoint threshold among max_features random
/// non-constant features and stop when pure, when their weight is below 2
/// (sample weights average 1 over the training set) or when no feature varies.
/// Throws ParameterError with fewer than two classes present.
ForestModel forest_train(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y,
                         std::size_t n_classes, const ForestConfig& cfg = {});

struct Prediction {
    std::size_t label = 0;
    std::vector<double> probabilities;
};

/// Mean of the per-tree normalized leaf histograms; ties go to the lowest
/// class. Throws DimensionError when x has the wrong length.
Prediction forest_predict(const ForestModel& model, std::span<const double> x);

nlohmann::json to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& j);

} // namespace timbre::forest

#endif
