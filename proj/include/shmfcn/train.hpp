#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shmfcn/dataset.hpp"
#include "shmfcn/model.hpp"

namespace shmfcn {

struct TrainConfig {
    int max_epochs = 1500;
    int min_epochs_before_stop = 750;
    int early_stop_patience = 3;
    double lr_start = 1e-3;
    double lr_end = 1e-4;
    double zeta = 1.0 / std::cbrt(2.0);
    int zeta_window = 100;
    int minibatch = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Learning rate of 0-based `epoch`: linear from lr_start to lr_end over
/// max_epochs, times zeta^zeta_count.
double lr_at(int epoch, const TrainConfig& cfg, int zeta_count);

template <typename Real>
struct AdamState {
    std::vector<Real> m;
    std::vector<Real> v;
    std::uint64_t step = 0;

    void reset(std::size_t n) {
        m.assign(n, Real(0));
        v.assign(n, Real(0));
        step = 0;
    }
};

/// One bias-corrected Adam step in place.
template <typename Real>
void adam_update(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state, double lr,
                 const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;  // 0-based
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    int zeta_count = 0;  // applications in effect during this epoch
    std::size_t clamped_logs = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    std::string stop_reason;
};

/// Everything required to continue training bit-exactly.
struct TrainState {
    nn::NetworkParams<float> params;  // after the last completed epoch
    nn::NetworkParams<float> best;    // lowest validation loss so far
    AdamState<float> adam;
    TrainHistory history;
    int next_epoch = 0;
    int zeta_count = 0;
    double best_val_loss = INFINITY;
    int val_bad_streak = 0;
    double best_train_loss = INFINITY;
    int train_stale_epochs = 0;
    bool finished = false;
};

struct TrainCallbacks {
    /// Called after validation, before the stopping rules read the record.
    std::function<void(EpochRecord&)> on_epoch_end;
    /// Called with the complete state once an epoch's bookkeeping is done.
    std::function<void(const TrainState&)> on_state;
};

struct TrainResult {
    nn::NetworkParams<float> params;  // best-validation parameters
    TrainHistory history;
    TrainState state;
};

/// Channel-selected float tensors for `indices`, one per branch.
std::vector<nn::Tensor3<float>> make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                                           const nn::NetworkConfig& cfg);

/// Sets the per-branch, per-channel input shift and scale from the
/// mean and standard deviation over the given instances.
void fit_input_standardization(nn::NetworkParams<float>& params, const Dataset& ds,
                               std::span<const std::size_t> indices);

/// Fresh state: seeded initialization plus input statistics of the training split.
TrainState initial_state(const nn::NetworkConfig& net, const Dataset& ds, const TrainConfig& cfg);

/// Epoch loop with Adam, the learning-rate schedule, the zeta rule and early
/// stopping. Continues from `resume` when given.
TrainResult train(const nn::NetworkConfig& net, const Dataset& ds, const TrainConfig& cfg, unsigned threads = 1,
                  const TrainCallbacks& callbacks = {}, std::optional<TrainState> resume = std::nullopt);

struct EvalReport {
    int classes = 0;
    double accuracy = 0.0;
    double loss = 0.0;
    std::vector<std::vector<long>> confusion;  // [target][prediction]
    std::vector<double> recall;                // NaN for classes absent from the split
    std::vector<int> targets;
    std::vector<int> predictions;

    long total() const { return static_cast<long>(targets.size()); }
};

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

/// Argmax with ties resolved toward the lower index.
int argmax_lowest(std::span<const double> p);

/// Probability rows for the given instances (inference mode).
std::vector<Prediction> predict_batch(const nn::NetworkParams<float>& params, const Dataset& ds,
                                      std::span<const std::size_t> indices, unsigned threads = 1);

Prediction predict(const nn::NetworkParams<float>& params, const Instance& instance, unsigned threads = 1);

EvalReport evaluate(const nn::NetworkParams<float>& params, const Dataset& ds, Split split, unsigned threads = 1);

/// Builds a report from parallel target/prediction lists.
EvalReport make_report(int classes, std::span<const int> targets, std::span<const int> predictions);

/// Random-guess accuracy of a task: 1 / classes.
double random_guess_baseline(Task task, int n_stories);

std::string history_csv(const TrainHistory& history);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
TrainHistory read_history_csv(const std::filesystem::path& path);
void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path);
/// Plain key: value summary with accuracy, baseline and per-class recall.
void write_eval_summary(const EvalReport& report, Task task, int n_stories, Split split,
                        const std::filesystem::path& path);

}  // namespace shmfcn
