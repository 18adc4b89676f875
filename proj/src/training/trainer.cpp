#include "timbre/trainer.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "timbre/adam.hpp"
#include "timbre/errors.hpp"
#include "timbre/parallel.hpp"
#include "timbre/random.hpp"

namespace timbre::training {

namespace {

// Stream tags keep the generators of different purposes apart.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

// Per-sample activations and gradients are megabytes each. Above glibc's
// default mmap threshold every one of them is a fresh mapping, so each step
// pays page faults for memory it just released. Keep them on the heap.
void keep_large_blocks_on_heap()
{
#ifdef __GLIBC__
    static const bool once = [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 512 << 20);
        return true;
    }();
    (void)once;
#endif
}

/// Samples the batches of one epoch ahead of the consumer. Batch j is drawn
/// from its own generator, so the sequence does not depend on which producer
/// thread builds it; pop() hands batches out strictly in index order.
class BatchQueue {
public:
    BatchQueue(const Dataset& data, std::size_t per_class, std::uint64_t seed, std::size_t epoch, std::size_t count,
               std::size_t depth, std::size_t producers)
        : data_(data), per_class_(per_class), seed_(seed), epoch_(epoch), count_(count), depth_(std::max<std::size_t>(1, depth))
    {
        for (std::size_t i = 0; i < producers; ++i) threads_.emplace_back([this] { produce(); });
    }

    BatchQueue(const BatchQueue&) = delete;
    BatchQueue& operator=(const BatchQueue&) = delete;

    ~BatchQueue()
    {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
    }

    Batch pop()
    {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return error_ || ready_.contains(next_pop_); });
        if (error_) std::rethrow_exception(error_);
        auto node = ready_.extract(next_pop_++);
        cv_.notify_all();
        return std::move(node.mapped());
    }

private:
    void produce()
    {
        for (;;) {
            std::size_t index = 0;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stop_ || next_claim_ >= count_ || next_claim_ < next_pop_ + depth_; });
                if (stop_ || next_claim_ >= count_) return;
                index = next_claim_++;
            }
            try {
                auto rng = derive_rng({seed_, kBatchStream, epoch_, index});
                auto batch = sample_batch(data_, per_class_, rng);
                std::lock_guard lock(mutex_);
                ready_.emplace(index, std::move(batch));
            } catch (...) {
                std::lock_guard lock(mutex_);
                if (!error_) error_ = std::current_exception();
                stop_ = true;
            }
            cv_.notify_all();
        }
    }

    const Dataset& data_;
    std::size_t per_class_;
    std::uint64_t seed_;
    std::size_t epoch_;
    std::size_t count_;
    std::size_t depth_;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::map<std::size_t, Batch> ready_;
    std::size_t next_claim_ = 0;
    std::size_t next_pop_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
    std::vector<std::jthread> threads_; // last member: joined before the state above dies
};

void check_config(const TrainConfig& cfg)
{
    if (cfg.batch_size == 0 || cfg.batch_size % kClasses != 0) {
        throw ParameterError("batch size must be a positive multiple of " + std::to_string(kClasses));
    }
    if (cfg.epoch_size == 0 || cfg.epoch_size % cfg.batch_size != 0) {
        throw ParameterError("epoch size must be a positive multiple of the batch size");
    }
    if (cfg.max_epochs == 0) throw ParameterError("max_epochs must be at least 1");
    if (!(cfg.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (cfg.time_budget_seconds < 0.0) throw ParameterError("time budget must not be negative");
}

Tensor sample_input(const Batch& batch, std::size_t i)
{
    const std::size_t stride = arch::kInputFrames * arch::kInputBins;
    const auto begin = batch.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * stride);
    return Tensor({arch::kInputFrames, arch::kInputBins, 1}, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(stride)));
}

// Loss of sample i with its gradient added into `grads`.
double sample_gradient(const arch::NetworkSpec& spec, std::span<const Tensor> params, const Batch& batch, std::size_t i,
                       std::optional<std::uint64_t> dropout_seed, std::span<Tensor> grads)
{
    std::optional<std::mt19937_64> rng;
    if (dropout_seed) rng = derive_rng({*dropout_seed, kDropoutStream, i});
    ad::Graph<float> g(params);
    const auto in = g.input(sample_input(batch, i));
    const auto logits = arch::emit(g, spec, in, rng ? &*rng : nullptr, true);
    const auto loss = g.softmax_cross_entropy(logits, batch.labels[i]);
    g.backward(grads);
    return g.value(loss)[0];
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

std::string to_string(StopReason r)
{
    switch (r) {
    case StopReason::plateau: return "plateau";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::time_budget: return "time_budget";
    }
    return "unknown";
}

bool loss_plateaued(std::span<const double> epoch_losses)
{
    const auto n = epoch_losses.size();
    return n >= 2 && epoch_losses[n - 1] >= epoch_losses[n - 2];
}

double batch_gradients(const arch::NetworkSpec& spec, std::span<const Tensor> params, const Batch& batch,
                       std::optional<std::uint64_t> dropout_seed, std::vector<Tensor>& grads, std::size_t threads)
{
    const std::size_t n = batch.labels.size();
    if (n == 0) throw ParameterError("batch_gradients: empty batch");
    grads.clear();
    for (const auto& p : params) grads.emplace_back(p.shape());

    // Each parameter receives exactly one contribution per sample, so adding
    // per-sample gradients in batch order gives the same bits as accumulating
    // them in place: the result is independent of the thread count.
    std::vector<double> losses(n);
    const std::size_t workers = std::min(resolve_threads(threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) losses[i] = sample_gradient(spec, params, batch, i, dropout_seed, grads);
    } else {
        std::vector<std::vector<Tensor>> per_sample(n);
        parallel_for(n, workers, [&](std::size_t i) {
            for (const auto& p : params) per_sample[i].emplace_back(p.shape());
            losses[i] = sample_gradient(spec, params, batch, i, dropout_seed, per_sample[i]);
        });
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < grads.size(); ++p) {
                auto dst = grads[p].data();
                const auto src = per_sample[i][p].data();
                for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
            }
        }
    }

    const float scale = 1.0f / static_cast<float>(n);
    for (auto& g : grads) {
        for (auto& v : g.data()) v *= scale;
    }
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(n);
}

TrainResult train(const arch::NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    check_config(cfg);
    keep_large_blocks_on_heap();
    for (std::size_t k = 0; k < kClasses; ++k) {
        if (data.window_count(k) == 0) {
            throw DatasetError("class " + std::to_string(k) + " has no usable 3 s training window");
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r;
    r.spec = spec;
    auto init_rng = derive_rng({cfg.seed, kInitStream});
    r.params = arch::init_params(spec, init_rng);
    ad::AdamState<float> adam(std::span<const Tensor>(r.params), ad::AdamConfig{.learning_rate = cfg.learning_rate});

    const std::size_t batches = cfg.epoch_size / cfg.batch_size;
    const std::size_t per_class = cfg.batch_size / kClasses;
    const std::size_t threads = resolve_threads(cfg.threads);
    std::vector<Tensor> grads;

    for (std::size_t epoch = 1;; ++epoch) {
        BatchQueue queue(data, per_class, cfg.seed, epoch, batches, cfg.queue_depth, threads > 2 ? 2 : 1);
        double loss_sum = 0.0, mean_sum = 0.0, var_sum = 0.0;
        for (std::size_t j = 0; j < batches; ++j) {
            Batch batch = queue.pop();
            const auto stats = normalize_batch(batch.inputs);
            mean_sum += stats.mean;
            var_sum += stats.stddev * stats.stddev;
            const std::uint64_t dropout_seed = derive_rng({cfg.seed, kDropoutStream, r.steps})();
            const double loss = batch_gradients(spec, r.params, batch, dropout_seed, grads, threads);
            if (!std::isfinite(loss)) {
                throw NumericError("training diverged: loss " + std::to_string(loss) + " at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(j) + " (step " +
                                   std::to_string(r.steps) + ")");
            }
            ad::adam_step<float>(adam, r.params, grads);
            loss_sum += loss;
            ++r.steps;
        }
        const double nb = static_cast<double>(batches);
        r.epoch_losses.push_back(loss_sum / nb);
        r.input_stats = {mean_sum / nb, std::sqrt(var_sum / nb)};
        r.seconds = seconds_since(t0);
        if (on_epoch) on_epoch({epoch, r.epoch_losses.back(), r.seconds});

        if (loss_plateaued(r.epoch_losses)) {
            r.reason = StopReason::plateau;
            break;
        }
        if (epoch >= cfg.max_epochs) {
            r.reason = StopReason::max_epochs;
            break;
        }
        // Do not start an epoch that is expected to end past the budget.
        const double per_epoch = r.seconds / static_cast<double>(epoch);
        if (cfg.time_budget_seconds > 0.0 && r.seconds + per_epoch > cfg.time_budget_seconds) {
            r.reason = StopReason::time_budget;
            break;
        }
    }
    r.seconds = seconds_since(t0);
    return r;
}

ad::Checkpoint to_checkpoint(const TrainResult& r, const TrainConfig& cfg, const std::array<std::string, kClasses>& class_names)
{
    ad::Checkpoint c;
    c.architecture = arch::to_json(r.spec);
    for (const auto& p : arch::param_layout(r.spec)) c.names.push_back(p.name);
    c.params = r.params;
    // Wall-clock figures stay out so equal runs give equal bytes.
    c.metadata = {
        {"seed", cfg.seed},
        {"learning_rate", cfg.learning_rate},
        {"epoch_size", cfg.epoch_size},
        {"batch_size", cfg.batch_size},
        {"max_epochs", cfg.max_epochs},
        {"epochs", r.epoch_losses.size()},
        {"steps", r.steps},
        {"epoch_losses", r.epoch_losses},
        {"stop_reason", to_string(r.reason)},
        {"input_mean", r.input_stats.mean},
        {"input_stddev", r.input_stats.stddev},
        {"class_names", class_names},
    };
    return c;
}

TrainedModel from_checkpoint(const ad::Checkpoint& ckpt, const arch::NetworkSpec* expected)
{
    TrainedModel m;
    m.spec = arch::network_from_json(ckpt.architecture);
    if (expected != nullptr && !(m.spec == *expected)) {
        throw ParameterError("checkpoint holds architecture '" + m.spec.name + "', expected '" + expected->name + "'");
    }
    const auto layout = arch::param_layout(m.spec);
    if (layout.size() != ckpt.params.size()) {
        throw DimensionError("checkpoint has " + std::to_string(ckpt.params.size()) + " tensors, architecture '" +
                             m.spec.name + "' needs " + std::to_string(layout.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (ckpt.params[i].shape() != layout[i].shape) {
            throw DimensionError("checkpoint tensor " + std::to_string(i) + " has shape " +
                                 shape_string(ckpt.params[i].shape()) + ", " + layout[i].name + " needs " +
                                 shape_string(layout[i].shape));
        }
    }
    m.params = ckpt.params;
    m.input_stats = {ckpt.metadata.value("input_mean", 0.0), ckpt.metadata.value("input_stddev", 1.0)};
    if (!(m.input_stats.stddev > 0.0)) throw ParameterError("checkpoint input_stddev must be positive");
    return m;
}

void write_loss_history(const std::filesystem::path& path, std::span<const double> epoch_losses)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, epoch_losses[i]);
        out << buf;
    }
}

std::size_t eval_window_count(std::size_t n_samples)
{
    return n_samples < kExcerptSamples ? 0 : (n_samples - kExcerptSamples) / kEvalHopSamples + 1;
}

std::size_t argmax(std::span<const float> probs)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

std::optional<double> EvalReport::accuracy(std::size_t k) const
{
    if (total.at(k) == 0) return std::nullopt;
    return 100.0 * static_cast<double>(correct[k]) / static_cast<double>(total[k]);
}

double EvalReport::mean_accuracy() const
{
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < kClasses; ++k) {
        if (const auto a = accuracy(k)) {
            sum += *a;
            ++present;
        }
    }
    return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

EvalReport evaluate(const TrainedModel& model, const Dataset& test, std::size_t threads)
{
    keep_large_blocks_on_heap();
    struct Job {
        const Recording* rec;
        std::size_t first_frame;
    };
    EvalReport report;
    std::vector<Job> jobs;
    const double hop = static_cast<double>(default_cqt().config().hop);
    for (const auto& r : test.recordings()) {
        for (std::size_t w = 0; w < eval_window_count(r.n_samples); ++w) {
            const std::size_t start = w * kEvalHopSamples;
            if (silent_fraction(r.silent, start, kExcerptSamples) >= kMaxSilentFraction) {
                ++report.dropped_silent;
                continue;
            }
            const auto block = static_cast<std::size_t>(std::llround(static_cast<double>(start) / hop));
            jobs.push_back({&r, block + 1});
        }
    }
    report.predictions.resize(jobs.size());
    report.truths.resize(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        Tensor x = test.excerpt(*jobs[i].rec, jobs[i].first_frame);
        apply_normalization(x, model.input_stats);
        const auto probs = arch::forward(model.spec, model.params, x);
        report.predictions[i] = argmax(probs.data());
        report.truths[i] = jobs[i].rec->label;
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        ++report.total[report.truths[i]];
        if (report.predictions[i] == report.truths[i]) ++report.correct[report.truths[i]];
    }
    return report;
}

TrialSummary summarize_trials(std::vector<EvalReport> reports)
{
    if (reports.empty()) throw ParameterError("summarize_trials: no reports");
    auto mean_std = [](const std::vector<double>& v) -> std::pair<double, std::optional<double>> {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        if (v.size() < 2) return {m, std::nullopt};
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
    };
    TrialSummary s;
    for (std::size_t k = 0; k < kClasses; ++k) {
        std::vector<double> acc;
        for (const auto& r : reports) {
            if (const auto a = r.accuracy(k)) acc.push_back(*a);
        }
        s.excerpts[k] = reports.front().total[k];
        if (acc.empty()) continue;
        const auto [m, sd] = mean_std(acc);
        s.mean[k] = m;
        s.stddev[k] = sd;
    }
    std::vector<double> avg;
    for (const auto& r : reports) avg.push_back(r.mean_accuracy());
    const auto [m, sd] = mean_std(avg);
    s.average_mean = m;
    s.average_stddev = sd.value_or(0.0);
    s.reports = std::move(reports);
    return s;
}

TrialSummary repeated_trials(const arch::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                             const TrainConfig& cfg, std::span<const std::uint64_t> seeds, const EpochCallback& on_epoch)
{
    if (seeds.size() < 2) throw ParameterError("repeated_trials needs at least two trials");
    std::vector<EvalReport> reports;
    for (const auto seed : seeds) {
        auto c = cfg;
        c.seed = seed;
        const auto r = train(spec, train_set, c, on_epoch);
        reports.push_back(evaluate({r.spec, r.params, r.input_stats}, test_set, cfg.threads));
    }
    return summarize_trials(std::move(reports));
}

namespace {

std::string fmt(std::optional<double> v)
{
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

void write_rows(const std::filesystem::path& path, const std::array<std::string, kClasses>& names,
                const std::array<std::optional<double>, kClasses>& acc,
                const std::array<std::optional<double>, kClasses>& sd, const std::array<std::size_t, kClasses>& n,
                double avg, std::optional<double> avg_sd)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "class,accuracy,stddev,n_excerpts\n";
    std::size_t total = 0;
    for (std::size_t k = 0; k < kClasses; ++k) {
        out << names[k] << ',' << fmt(acc[k]) << ',' << fmt(sd[k]) << ',' << n[k] << '\n';
        total += n[k];
    }
    out << "average," << fmt(avg) << ',' << fmt(avg_sd) << ',' << total << '\n';
}

} // namespace

void write_accuracy_csv(const std::filesystem::path& path, const EvalReport& report,
                        const std::array<std::string, kClasses>& class_names)
{
    std::array<std::optional<double>, kClasses> acc, sd;
    for (std::size_t k = 0; k < kClasses; ++k) acc[k] = report.accuracy(k);
    write_rows(path, class_names, acc, sd, report.total, report.mean_accuracy(), std::nullopt);
}

void write_accuracy_csv(const std::filesystem::path& path, const TrialSummary& s,
                        const std::array<std::string, kClasses>& class_names)
{
    write_rows(path, class_names, s.mean, s.stddev, s.excerpts, s.average_mean, s.average_stddev);
}

} // namespace timbre::training
