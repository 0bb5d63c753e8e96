#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blocklab/matrix.hpp"
#include "blocklab/net.hpp"

namespace blocklab {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

enum class LossKind { mse, focal, cross_entropy };

struct LossConfig {
    LossKind kind = LossKind::mse;
    double alpha = 1.0;  // focal balancing weight
    double gamma = 0.0;  // focal focusing parameter
};

struct TrainConfig {
    std::size_t steps = 1000;
    std::size_t batch = 128;
    double lr = 1e-3;
    OptimizerConfig optimizer;
    LossConfig loss;
    std::size_t early_stop_patience = 10;
    std::size_t eval_every = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EvalRecord {
    std::size_t step;
    double train_loss;
    double val_loss;
};

struct TrainHistory {
    std::vector<EvalRecord> records;
    double best_val = 0.0;
    std::size_t stopped_at = 0;
    bool diverged = false;

    /// CSV: header "step,train_loss,val_loss", one record per line.
    void write_csv(std::ostream& out) const;
    std::string to_csv() const;
};

struct LossValue {
    double value = 0.0;
    Matrix grad;
    bool clamped = false;  // focal: some p_t hit the 1e-12 clamp
};

/// Mean squared error over all entries; grad = 2 (pred - target) / count.
LossValue mse_loss(const Matrix& pred, const Matrix& target);

/// Focal loss in nats, mean over the batch. probs rows must be distributions;
/// the returned gradient is with respect to the logits that produced them
/// (probs = softmax(logits)). gamma = 0 reduces to alpha-weighted
/// cross-entropy. p_t = 0 is clamped at 1e-12 and flagged.
LossValue focal_loss(const Matrix& probs, const std::vector<std::int32_t>& targets,
                     double alpha, double gamma);

/// Cross-entropy in nats over logits, with the usual softmax gradient.
LossValue softmax_cross_entropy(const Matrix& logits, const std::vector<std::int32_t>& targets);

Matrix softmax(const Matrix& logits);

/// Thrown by the optimizer when a gradient entry is non-finite; carries the
/// offending layer id.
struct NonFiniteGradError : std::runtime_error {
    explicit NonFiniteGradError(const std::string& where)
        : std::runtime_error("non-finite gradient in " + where), layer(where) {}
    std::string layer;
};

/// First/second-moment state for Adam.
struct OptimizerState {
    std::vector<LayerParams> m, v;
    std::optional<EmbeddingParams> em, ev;
    std::size_t t = 0;
};

OptimizerState make_optimizer_state(const NetworkSpec& spec, const NetworkState& state);

/// One optimizer step; deterministic, no weight decay. Bumps state.revision.
void adam_step(NetworkState& state, OptimizerState& opt, const NetworkGrads& grads,
               const TrainConfig& config, std::size_t t);
void sgd_step(NetworkState& state, const NetworkGrads& grads, const TrainConfig& config);

enum class Split { train, val };

struct TaskBatch {
    Matrix x;                          // vector input, or empty when tokens used
    std::vector<std::int32_t> tokens;  // token input, or empty
    Matrix y;                          // regression targets
    std::vector<std::int32_t> classes; // classification targets
};

/// Seeded batch source: batches are pure functions of (split, index).
struct TaskSource {
    std::function<TaskBatch(Split, std::uint64_t index, std::size_t batch)> next;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::size_t val_batches = 4;
};

/// Per-row counts of steps in which an embedding row received a nonzero
/// gradient.
struct UpdateCounter {
    std::vector<std::uint64_t> naive_rows;
    std::vector<std::uint64_t> pitch_rows;
    std::vector<std::uint64_t> hand_rows;
    std::uint64_t steps = 0;
};

struct UpdateFrequencyReport {
    std::vector<double> naive_freq;
    std::vector<double> pitch_freq;
    std::vector<double> hand_freq;
};

UpdateFrequencyReport update_frequency(const UpdateCounter& counter);

struct TrainResult {
    NetworkState best_state;
    TrainHistory history;
    UpdateCounter counter;
};

/// Trains a fresh He-initialized state on the task. Evaluates at step 0 and
/// every eval_every steps; stops at the step limit or after
/// early_stop_patience evaluations without val improvement; returns the
/// best-val checkpoint. A non-finite loss flags the run as diverged and
/// preserves the history.
TrainResult train(const NetworkSpec& spec, const TaskSource& task, const TrainConfig& config);

}  // namespace blocklab
