#include "cal/model.hpp"

#include <algorithm>

#include "cal/errors.hpp"

namespace cal {

std::string_view to_string(HeadInput h) { return h == HeadInput::Features ? "features" : "hidden"; }

HeadInput parse_head_input(std::string_view name) {
    if (name == "features") return HeadInput::Features;
    if (name == "hidden") return HeadInput::Hidden;
    throw UsageError("unknown head input '" + std::string(name) + "' (expected features or hidden)");
}

AttentionParams AttentionParams::init(std::size_t dim, std::size_t hidden, Rng& rng) {
    AttentionParams p;
    p.node_hidden = Linear::init(dim, hidden, rng);
    p.node_out = Linear::init(hidden, 2, rng);
    // Glorot bounds of the full (2d x hidden) weight, split into its two halves.
    const Tensor full = glorot_uniform(2 * dim, hidden, rng);
    std::vector<double> src(full.values().begin(), full.values().begin() + static_cast<std::ptrdiff_t>(dim * hidden));
    std::vector<double> dst(full.values().begin() + static_cast<std::ptrdiff_t>(dim * hidden), full.values().end());
    p.edge_src = Tensor::from({dim, hidden}, std::move(src), true);
    p.edge_dst = Tensor::from({dim, hidden}, std::move(dst), true);
    p.edge_bias = zero_bias(hidden);
    p.edge_out = Linear::init(hidden, 2, rng);
    return p;
}

namespace {

GraphConv make_conv(Backbone backbone, std::size_t in, std::size_t out, Rng& rng) {
    return backbone == Backbone::GCN ? GraphConv::gcn(in, out, rng) : GraphConv::gin(in, out, out, rng);
}

}  // namespace

CalModel::CalModel(const ModelConfig& config) : config_(config) {
    if (config.num_classes < 2) throw ContractError("need at least two classes");
    if (config.hidden < 1 || config.in_dim < 1) throw ContractError("dimensions must be positive");
    Rng rng(config.seed);
    encoder = EncoderParams::init(config.backbone, config.in_dim, config.hidden, config.depth, rng);
    attention = AttentionParams::init(config.hidden, config.hidden, rng);
    const std::size_t head_in = config.head_input == HeadInput::Features ? config.in_dim : config.hidden;
    head.conv_c = make_conv(config.backbone, head_in, config.hidden, rng);
    head.conv_t = make_conv(config.backbone, head_in, config.hidden, rng);
    head.phi_c = Linear::init(config.hidden, config.num_classes, rng);
    head.phi_t = Linear::init(config.hidden, config.num_classes, rng);
    head.phi = Linear::init(config.hidden, config.num_classes, rng);
}

const Linear& CalModel::intervention_classifier() const {
    return config_.tie_intervention_classifier ? head.phi_c : head.phi;
}

namespace {

void collect_node_attention(const AttentionParams& a, ParameterList& out) {
    a.node_hidden.collect(out, "attention.node.0");
    a.node_out.collect(out, "attention.node.1");
}

void collect_edge_attention(const AttentionParams& a, ParameterList& out) {
    out.push_back({"attention.edge.0.weight_src", a.edge_src});
    out.push_back({"attention.edge.0.weight_dst", a.edge_dst});
    out.push_back({"attention.edge.0.bias", a.edge_bias});
    a.edge_out.collect(out, "attention.edge.1");
}

}  // namespace

ParameterList CalModel::parameters() const {
    ParameterList out;
    encoder.collect(out, "encoder");
    collect_node_attention(attention, out);
    collect_edge_attention(attention, out);
    head.conv_c.collect(out, "head.conv_c");
    head.conv_t.collect(out, "head.conv_t");
    head.phi_c.collect(out, "head.phi_c");
    head.phi_t.collect(out, "head.phi_t");
    if (!config_.tie_intervention_classifier) head.phi.collect(out, "head.phi");
    return out;
}

ParameterList CalModel::trainable_parameters() const {
    ParameterList out;
    if (!config_.cal) {
        encoder.collect(out, "encoder");
        head.phi_c.collect(out, "head.phi_c");
        return out;
    }
    const bool encoder_used =
        config_.node_attention || config_.edge_attention || config_.head_input == HeadInput::Hidden;
    if (encoder_used) encoder.collect(out, "encoder");
    if (config_.node_attention) collect_node_attention(attention, out);
    if (config_.edge_attention) collect_edge_attention(attention, out);
    head.conv_c.collect(out, "head.conv_c");
    head.conv_t.collect(out, "head.conv_t");
    head.phi_c.collect(out, "head.phi_c");
    head.phi_t.collect(out, "head.phi_t");
    if (!config_.tie_intervention_classifier) head.phi.collect(out, "head.phi");
    return out;
}

AttentionScores node_attention(Tape& tape, const AttentionParams& attn, const Tensor& h) {
    const Tensor logits = attn.node_out.forward(tape, tape.relu(attn.node_hidden.forward(tape, h)));
    const Tensor probs = tape.row_softmax(logits);
    return {tape.column(probs, 0), tape.column(probs, 1)};
}

AttentionScores edge_attention(Tape& tape, const AttentionParams& attn, const Tensor& h, const DirectedEdges& edges,
                               bool symmetric) {
    // [h_i || h_j] W + b == (h W_src + b)[i] + (h W_dst)[j]
    const Tensor from_src = tape.add_row(tape.matmul(h, attn.edge_src), attn.edge_bias);
    const Tensor from_dst = tape.matmul(h, attn.edge_dst);
    const Tensor hidden = tape.relu(tape.gather_add(from_src, edges.row, from_dst, edges.col));
    const Tensor probs = tape.row_softmax(attn.edge_out.forward(tape, hidden));
    AttentionScores scores{tape.column(probs, 0), tape.column(probs, 1)};
    if (!symmetric) return scores;
    Index reverse(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) reverse[e] = static_cast<std::uint32_t>(DirectedEdges::reverse(e));
    auto average = [&](const Tensor& t) { return tape.scale(tape.add(t, tape.gather_rows(t, reverse)), 0.5); };
    return {average(scores.causal), average(scores.trivial)};
}

MaskSet build_masks(Tape& tape, const Tensor& node_causal, const Tensor& edge_causal) {
    return {node_causal, edge_causal, tape.one_minus(node_causal), tape.one_minus(edge_causal)};
}

namespace {

BranchOutput branch(Tape& tape, const GraphConv& conv, const Linear& classifier, const GraphView& view,
                    const Tensor& input, const Tensor& node_mask, const Tensor& edge_mask) {
    const Tensor masked = tape.mul_column(input, node_mask);
    const MaskedAdjacency adj = make_adjacency(tape, view, edge_mask, conv.backbone());
    const Tensor repr = readout_mean(tape, conv.forward(tape, adj, masked, true));
    return {repr, classifier.forward(tape, repr)};
}

}  // namespace

BranchOutput causal_forward(Tape& tape, const HeadParams& head, const GraphView& view, const Tensor& input,
                            const MaskSet& masks) {
    return branch(tape, head.conv_c, head.phi_c, view, input, masks.node, masks.edge);
}

BranchOutput trivial_forward(Tape& tape, const HeadParams& head, const GraphView& view, const Tensor& input,
                             const MaskSet& masks) {
    return branch(tape, head.conv_t, head.phi_t, view, input, masks.node_complement, masks.edge_complement);
}

Tensor intervene_predict(Tape& tape, const Linear& phi, const Tensor& causal_repr, const Tensor& trivial_repr) {
    if (causal_repr.shape() != trivial_repr.shape())
        throw ShapeError("intervene_predict: representation shapes differ, " + shape_string(causal_repr.shape()) +
                         " vs " + shape_string(trivial_repr.shape()));
    return phi.forward(tape, tape.add(causal_repr, trivial_repr));
}

namespace {

struct AttentionStage {
    Tensor x;
    Tensor hidden;
    AttentionScores node;
    AttentionScores edge;
};

AttentionStage attend(Tape& tape, const CalModel& model, const GraphView& view) {
    const auto& cfg = model.config();
    AttentionStage s;
    s.x = view.graph->features();
    s.hidden = encoder_forward(tape, model.encoder, view, s.x);
    const std::size_t n = view.num_nodes(), e = view.edges.size();
    if (cfg.node_attention) {
        s.node = node_attention(tape, model.attention, s.hidden);
    } else {
        s.node = {Tensor::filled({n, 1}, 0.5), Tensor::filled({n, 1}, 0.5)};
    }
    if (cfg.edge_attention) {
        s.edge = edge_attention(tape, model.attention, s.hidden, view.edges, cfg.symmetric_edge_attention);
    } else {
        s.edge = {Tensor::filled({e, 1}, 0.5), Tensor::filled({e, 1}, 0.5)};
    }
    return s;
}

}  // namespace

GraphForward forward_graph(Tape& tape, const CalModel& model, const GraphView& view) {
    AttentionStage s = attend(tape, model, view);
    GraphForward out;
    out.hidden = s.hidden;
    out.node = s.node;
    out.edge = s.edge;
    out.masks = build_masks(tape, s.node.causal, s.edge.causal);
    const Tensor& input = model.config().head_input == HeadInput::Features ? s.x : s.hidden;
    out.causal = causal_forward(tape, model.head, view, input, out.masks);
    out.trivial = trivial_forward(tape, model.head, view, input, out.masks);
    return out;
}

Tensor inference_logits(Tape& tape, const CalModel& model, const GraphView& view) {
    if (!model.config().cal)
        return model.head.phi_c.forward(tape, readout_mean(tape, encoder_forward(tape, model.encoder, view)));
    AttentionStage s = attend(tape, model, view);
    const MaskSet masks = build_masks(tape, s.node.causal, s.edge.causal);
    const Tensor& input = model.config().head_input == HeadInput::Features ? s.x : s.hidden;
    return causal_forward(tape, model.head, view, input, masks).logits;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw ContractError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::size_t predict(const CalModel& model, const Graph& graph) {
    Tape tape(false);
    const GraphView view(graph);
    const Tensor logits = inference_logits(tape, model, view);
    return argmax(logits.values());
}

AttentionRecord export_attention(const CalModel& model, const Graph& graph) {
    Tape tape(false);
    const GraphView view(graph);
    const AttentionStage s = attend(tape, model, view);
    AttentionRecord rec;
    rec.node_causal.assign(s.node.causal.values().begin(), s.node.causal.values().end());
    const auto beta = s.edge.causal.values();
    for (std::size_t e = 0; e < view.edges.size(); ++e)
        rec.edges.emplace_back(view.edges.row[e], view.edges.col[e], beta[e]);
    return rec;
}

}  // namespace cal
