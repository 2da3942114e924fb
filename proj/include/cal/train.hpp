#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cal/graph.hpp"
#include "cal/model.hpp"
#include "cal/optim.hpp"

namespace cal {

/// How causal representations are paired with trivial ones for the
/// intervention loss: a random permutation per batch, or the identity.
enum class ShuffleMode { Random, Ordered };
std::string_view to_string(ShuffleMode m);
ShuffleMode parse_shuffle_mode(std::string_view name);

struct TrainConfig {
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    Backbone backbone = Backbone::GCN;
    bool cal_enabled = true;
    ShuffleMode shuffle_mode = ShuffleMode::Random;
    /// Independent pairings averaged into the intervention loss.
    std::size_t intervention_samples = 1;

    std::size_t hidden = 128;
    std::size_t depth = 3;
    HeadInput head_input = HeadInput::Features;
    bool node_attention = true;
    bool edge_attention = true;
    bool symmetric_edge_attention = false;
    bool tie_intervention_classifier = false;

    /// Throws UsageError on out-of-range values.
    void validate() const;
};

ModelConfig model_config(const TrainConfig& config, const Dataset& dataset);

struct LossBreakdown {
    double sup = 0.0;
    double unif = 0.0;
    double caus = 0.0;
    double total = 0.0;
};

/// Mean cross-entropy of softmax(logits) against `labels`; logits are (M x K).
Tensor loss_sup(Tape& tape, const Tensor& logits, std::span<const int> labels);
/// Mean KL(uniform || softmax(logits)).
Tensor loss_unif(Tape& tape, const Tensor& logits);
/// Cross-entropy of intervened predictions against each causal graph's own label.
Tensor loss_caus(Tape& tape, const Tensor& intervened_logits, std::span<const int> labels);

struct BatchLoss {
    Tensor sup;
    Tensor unif;
    Tensor caus;
    Tensor total;

    LossBreakdown values() const;
};

/// Forward pass and objective over one batch. `pairings` holds one
/// permutation of [0, M) per intervention sample; entry k pairs the causal
/// representation of graph k with the trivial representation of graph
/// pairings[s][k]. Vanilla models only produce the supervised term.
BatchLoss batch_loss(Tape& tape, const CalModel& model, std::span<const GraphView> views,
                     const std::vector<std::vector<std::size_t>>& pairings, const TrainConfig& config);

/// Draws the pairings for a batch of `m` graphs according to `config`.
std::vector<std::vector<std::size_t>> draw_pairings(std::size_t m, const TrainConfig& config, Rng& rng);

/// One pass over the training split: shuffled batches, one optimizer step per
/// batch. Returns the graph-weighted epoch mean; per-batch values are
/// appended to `batches` when given.
LossBreakdown train_epoch(CalModel& model, AdamState& adam, const Dataset& dataset, const TrainConfig& config, Rng& rng,
                          std::vector<LossBreakdown>* batches = nullptr);

struct Evaluation {
    double accuracy = 0.0;
    /// counts[truth][prediction]
    std::vector<std::vector<std::size_t>> confusion;
    /// Each non-empty row divided by its total.
    std::vector<std::vector<double>> confusion_normalized;
    std::vector<std::size_t> indices;
    std::vector<std::size_t> predictions;
};

Evaluation evaluate(const CalModel& model, const Dataset& dataset, Split split);
Evaluation evaluate(const CalModel& model, const Dataset& dataset, std::span<const std::size_t> indices);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;
    std::optional<double> val_accuracy;
    double seconds = 0.0;
};

struct RunRecord {
    TrainConfig config;
    std::string config_text;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_accuracy;
    double test_accuracy_best = 0.0;
    double test_accuracy_last = 0.0;
    /// Evaluation of the selected (best-validation) model on the test split.
    Evaluation test;
    double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` for `config.epochs`, evaluating the validation split after
/// every epoch. The parameters of the best validation epoch (earliest on
/// ties; the last epoch if there is no validation split) are restored before
/// returning. Test accuracy is reported for both the selected and the last epoch.
RunRecord fit(CalModel& model, const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

std::vector<std::vector<double>> snapshot(const ParameterList& params);
void restore(const ParameterList& params, const std::vector<std::vector<double>>& values);

}  // namespace cal
