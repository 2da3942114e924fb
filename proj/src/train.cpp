#include "cal/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cal/errors.hpp"

namespace cal {

std::string_view to_string(ShuffleMode m) { return m == ShuffleMode::Random ? "random" : "ordered"; }

ShuffleMode parse_shuffle_mode(std::string_view name) {
    if (name == "random") return ShuffleMode::Random;
    if (name == "ordered") return ShuffleMode::Ordered;
    throw UsageError("unknown shuffle mode '" + std::string(name) + "' (expected random or ordered)");
}

void TrainConfig::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw UsageError("lambda1 and lambda2 must be >= 0");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
    if (intervention_samples < 1) throw UsageError("intervention samples must be >= 1");
    if (hidden < 1) throw UsageError("hidden width must be >= 1");
    if (depth < 1) throw UsageError("depth must be >= 1");
}

ModelConfig model_config(const TrainConfig& config, const Dataset& dataset) {
    ModelConfig m;
    m.backbone = config.backbone;
    m.in_dim = dataset.feature_dim;
    m.hidden = config.hidden;
    m.depth = config.depth;
    m.num_classes = dataset.num_classes;
    m.cal = config.cal_enabled;
    m.head_input = config.head_input;
    m.node_attention = config.node_attention;
    m.edge_attention = config.edge_attention;
    m.symmetric_edge_attention = config.symmetric_edge_attention;
    m.tie_intervention_classifier = config.tie_intervention_classifier;
    m.seed = config.seed;
    return m;
}

namespace {

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
    Tensor t = Tensor::zeros({labels.size(), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw ContractError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(classes) +
                                " classes");
        t.values()[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return t;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.rows() != labels.size())
        throw ShapeError("cross entropy: " + shape_string(logits.shape()) + " logits for " +
                         std::to_string(labels.size()) + " labels");
    const Tensor target = one_hot(labels, logits.cols());
    const Tensor log_p = tape.log(tape.row_softmax(logits));
    return tape.scale(tape.mean(tape.row_sum(tape.mul(log_p, target))), -1.0);
}

}  // namespace

Tensor loss_sup(Tape& tape, const Tensor& logits, std::span<const int> labels) {
    return cross_entropy(tape, logits, labels);
}

Tensor loss_unif(Tape& tape, const Tensor& logits) {
    // sum_k (1/K) log((1/K) / p_k) = -log K - mean_k log p_k
    const double k = static_cast<double>(logits.cols());
    const Tensor log_p = tape.log(tape.row_softmax(logits));
    return tape.add_scalar(tape.scale(tape.mean(tape.row_mean(log_p)), -1.0), -std::log(k));
}

Tensor loss_caus(Tape& tape, const Tensor& intervened_logits, std::span<const int> labels) {
    return cross_entropy(tape, intervened_logits, labels);
}

LossBreakdown BatchLoss::values() const {
    LossBreakdown b;
    b.sup = sup.item();
    b.unif = unif.defined() ? unif.item() : 0.0;
    b.caus = caus.defined() ? caus.item() : 0.0;
    b.total = total.item();
    return b;
}

std::vector<std::vector<std::size_t>> draw_pairings(std::size_t m, const TrainConfig& config, Rng& rng) {
    std::vector<std::vector<std::size_t>> out(config.intervention_samples, std::vector<std::size_t>(m));
    for (auto& perm : out) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        if (config.shuffle_mode == ShuffleMode::Random) std::shuffle(perm.begin(), perm.end(), rng);
    }
    return out;
}

BatchLoss batch_loss(Tape& tape, const CalModel& model, std::span<const GraphView> views,
                     const std::vector<std::vector<std::size_t>>& pairings, const TrainConfig& config) {
    if (views.empty()) throw ContractError("batch_loss: empty batch");
    std::vector<int> labels;
    labels.reserve(views.size());
    for (const auto& v : views) labels.push_back(v.graph->label);

    BatchLoss out;
    if (!model.config().cal) {
        std::vector<Tensor> logits;
        for (const auto& v : views) logits.push_back(inference_logits(tape, model, v));
        out.sup = loss_sup(tape, tape.concat_rows(logits), labels);
        out.total = out.sup;
        return out;
    }

    std::vector<Tensor> zc, zt, hc, ht;
    for (const auto& v : views) {
        const GraphForward f = forward_graph(tape, model, v);
        zc.push_back(f.causal.logits);
        zt.push_back(f.trivial.logits);
        hc.push_back(f.causal.representation);
        ht.push_back(f.trivial.representation);
    }
    const Tensor causal_repr = tape.concat_rows(hc);
    const Tensor trivial_repr = tape.concat_rows(ht);
    out.sup = loss_sup(tape, tape.concat_rows(zc), labels);
    out.unif = loss_unif(tape, tape.concat_rows(zt));

    if (pairings.empty()) throw ContractError("batch_loss: no pairings");
    Tensor caus;
    for (const auto& perm : pairings) {
        if (perm.size() != labels.size()) throw ContractError("batch_loss: pairing size differs from batch size");
        Index idx(perm.begin(), perm.end());
        const Tensor z = intervene_predict(tape, model.intervention_classifier(), causal_repr,
                                           tape.gather_rows(trivial_repr, idx));
        const Tensor l = loss_caus(tape, z, labels);
        caus = caus.defined() ? tape.add(caus, l) : l;
    }
    out.caus = pairings.size() == 1 ? caus : tape.scale(caus, 1.0 / static_cast<double>(pairings.size()));
    out.total = tape.add(tape.add(out.sup, tape.scale(out.unif, config.lambda1)), tape.scale(out.caus, config.lambda2));
    return out;
}

LossBreakdown train_epoch(CalModel& model, AdamState& adam, const Dataset& dataset, const TrainConfig& config, Rng& rng,
                          std::vector<LossBreakdown>* batches) {
    std::vector<std::size_t> order = dataset.indices(Split::Train);
    if (order.empty()) throw ContractError("train_epoch: empty training split");
    std::shuffle(order.begin(), order.end(), rng);
    const ParameterList params = model.trainable_parameters();

    LossBreakdown epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        std::vector<GraphView> views;
        views.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) views.emplace_back(dataset.graphs[order[i]]);
        const auto pairings = draw_pairings(views.size(), config, rng);

        Tape tape;
        const BatchLoss loss = batch_loss(tape, model, views, pairings, config);
        tape.backward(loss.total);
        tape.clear();
        adam_step(adam, params);

        const LossBreakdown b = loss.values();
        if (batches) batches->push_back(b);
        const double w = static_cast<double>(views.size());
        epoch.sup += w * b.sup;
        epoch.unif += w * b.unif;
        epoch.caus += w * b.caus;
        epoch.total += w * b.total;
    }
    const double n = static_cast<double>(order.size());
    epoch.sup /= n;
    epoch.unif /= n;
    epoch.caus /= n;
    epoch.total /= n;
    return epoch;
}

Evaluation evaluate(const CalModel& model, const Dataset& dataset, Split split) {
    const auto idx = dataset.indices(split);
    return evaluate(model, dataset, idx);
}

Evaluation evaluate(const CalModel& model, const Dataset& dataset, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("evaluate: empty split");
    const std::size_t k = dataset.num_classes;
    Evaluation ev;
    ev.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        const Graph& g = dataset.graphs.at(i);
        const std::size_t p = predict(model, g);
        const auto truth = static_cast<std::size_t>(g.label);
        if (truth >= k) throw ContractError("evaluate: label out of range");
        ++ev.confusion[truth][p];
        if (p == truth) ++correct;
        ev.indices.push_back(i);
        ev.predictions.push_back(p);
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    ev.confusion_normalized.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t total = std::accumulate(ev.confusion[r].begin(), ev.confusion[r].end(), std::size_t{0});
        if (total == 0) continue;
        for (std::size_t c = 0; c < k; ++c)
            ev.confusion_normalized[r][c] = static_cast<double>(ev.confusion[r][c]) / static_cast<double>(total);
    }
    return ev;
}

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return out;
}

void restore(const ParameterList& params, const std::vector<std::vector<double>>& values) {
    if (values.size() != params.size()) throw ContractError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        auto dst = t.values();
        if (dst.size() != values[i].size()) throw ContractError("restore: size mismatch for " + params[i].name);
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

RunRecord fit(CalModel& model, const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();

    RunRecord rec;
    rec.config = config;
    std::seed_seq seq{config.seed, std::uint64_t{0x7472616e}};
    Rng rng(seq);
    AdamState adam(AdamOptions{.learning_rate = config.learning_rate});
    const ParameterList all = model.parameters();
    const bool has_val = !dataset.indices(Split::Val).empty();
    const bool has_test = !dataset.indices(Split::Test).empty();

    std::vector<std::vector<double>> best;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto e0 = Clock::now();
        EpochRecord er;
        er.epoch = epoch;
        er.loss = train_epoch(model, adam, dataset, config, rng);
        if (has_val) {
            er.val_accuracy = evaluate(model, dataset, Split::Val).accuracy;
            if (!rec.best_val_accuracy || *er.val_accuracy > *rec.best_val_accuracy) {
                rec.best_val_accuracy = er.val_accuracy;
                rec.best_epoch = epoch;
                best = snapshot(all);
            }
        }
        er.seconds = std::chrono::duration<double>(Clock::now() - e0).count();
        rec.epochs.push_back(er);
        if (on_epoch) on_epoch(er);
    }

    if (has_test) rec.test_accuracy_last = evaluate(model, dataset, Split::Test).accuracy;
    if (has_val) {
        restore(all, best);
    } else {
        rec.best_epoch = config.epochs;
    }
    if (has_test) {
        rec.test = evaluate(model, dataset, Split::Test);
        rec.test_accuracy_best = rec.test.accuracy;
    }
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return rec;
}

}  // namespace cal
