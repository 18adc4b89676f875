#ifndef TIMBRE_TRAINER_HPP
#define TIMBRE_TRAINER_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "timbre/checkpoint.hpp"
#include "timbre/dataset.hpp"
#include "timbre/network.hpp"

namespace timbre::training {

struct TrainConfig {
    std::size_t epoch_size = 8192;
    std::size_t batch_size = 32; // a multiple of the class count
    std::size_t max_epochs = 100;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    /// Stop after the epoch during which this much wall time elapsed. 0 disables.
    double time_budget_seconds = 0.0;
    std::size_t threads = 0;
    /// Batches sampled ahead of the consumer.
    std::size_t queue_depth = 4;
};

enum class StopReason { plateau, max_epochs, time_budget };
std::string to_string(StopReason r);

/// The stopping rule: true once the newest epoch's mean loss is not below the
/// one before it.
bool loss_plateaued(std::span<const double> epoch_losses);

struct EpochReport {
    std::size_t epoch = 0; // 1-based
    double mean_loss = 0.0;
    double seconds = 0.0;  // since training started
};

struct TrainResult {
    arch::NetworkSpec spec;
    std::vector<Tensor> params;
    std::vector<double> epoch_losses;
    StopReason reason = StopReason::max_epochs;
    Normalization input_stats; // mean batch statistics of the final epoch
    std::uint64_t steps = 0;
    double seconds = 0.0;
};

/// Mean cross-entropy of a normalized batch and its gradient, summed over
/// samples in batch order and divided by the batch size. Sample i uses a
/// dropout stream seeded from (dropout_seed, i); no dropout when absent.
double batch_gradients(const arch::NetworkSpec& spec, std::span<const Tensor> params, const Batch& batch,
                       std::optional<std::uint64_t> dropout_seed, std::vector<Tensor>& grads,
                       std::size_t threads = 0);

using EpochCallback = std::function<void(const EpochReport&)>;

/// Adam over class-balanced batches until the stopping rule, the epoch cap or
/// the time budget ends the run. Bit-reproducible from (spec, data, config).
/// Throws NumericError naming the epoch and step on a non-finite loss.
TrainResult train(const arch::NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

ad::Checkpoint to_checkpoint(const TrainResult& r, const TrainConfig& cfg,
                             const std::array<std::string, kClasses>& class_names);

struct TrainedModel {
    arch::NetworkSpec spec;
    std::vector<Tensor> params;
    Normalization input_stats;
};

/// Rebuilds the network from the checkpoint and checks every tensor against
/// the layout. When `expected` is given the stored architecture must match it.
TrainedModel from_checkpoint(const ad::Checkpoint& ckpt, const arch::NetworkSpec* expected = nullptr);

void write_loss_history(const std::filesystem::path& path, std::span<const double> epoch_losses);

// Evaluation --------------------------------------------------------------

inline constexpr std::size_t kEvalHopSamples = 66150; // 1.5 s

/// 3 s windows at a 1.5 s hop that fit inside n samples.
std::size_t eval_window_count(std::size_t n_samples);

struct EvalReport {
    std::array<std::size_t, kClasses> correct{};
    std::array<std::size_t, kClasses> total{};
    std::vector<std::size_t> predictions; // per usable window, in recording order
    std::vector<std::size_t> truths;
    std::size_t dropped_silent = 0;

    /// Percent; empty when the class has no test window.
    [[nodiscard]] std::optional<double> accuracy(std::size_t k) const;
    /// Mean of the per-class accuracies over present classes.
    [[nodiscard]] double mean_accuracy() const;
};

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> probs);

/// Classifies every usable window of every test recording. Windows are cut
/// from the full-file transform starting at the frame nearest to each 1.5 s
/// boundary; windows that are mostly silent are dropped.
EvalReport evaluate(const TrainedModel& model, const Dataset& test, std::size_t threads = 0);

struct TrialSummary {
    std::array<std::optional<double>, kClasses> mean;
    std::array<std::optional<double>, kClasses> stddev;
    std::array<std::size_t, kClasses> excerpts{};
    double average_mean = 0.0;
    double average_stddev = 0.0;
    std::vector<EvalReport> reports;
};

/// Mean and sample standard deviation across reports.
TrialSummary summarize_trials(std::vector<EvalReport> reports);

/// Runs train + evaluate once per seed.
TrialSummary repeated_trials(const arch::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                             const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                             const EpochCallback& on_epoch = {});

/// class,accuracy,stddev,n_excerpts with one row per class and a final
/// "average" row. Accuracies in percent; NA marks an absent class or a
/// deviation that was not measured.
void write_accuracy_csv(const std::filesystem::path& path, const EvalReport& report,
                        const std::array<std::string, kClasses>& class_names);
void write_accuracy_csv(const std::filesystem::path& path, const TrialSummary& summary,
                        const std::array<std::string, kClasses>& class_names);

} // namespace timbre::training

#endif
