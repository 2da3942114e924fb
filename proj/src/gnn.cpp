#include "cal/gnn.hpp"

#include "cal/errors.hpp"

namespace cal {

std::string_view to_string(Backbone b) { return b == Backbone::GCN ? "gcn" : "gin"; }

Backbone parse_backbone(std::string_view name) {
    if (name == "gcn" || name == "GCN") return Backbone::GCN;
    if (name == "gin" || name == "GIN") return Backbone::GIN;
    throw UsageError("unknown backbone '" + std::string(name) + "' (expected gcn or gin)");
}

NormalizedAdjacency normalize_adjacency(Tape& tape, const GraphView& view, const Tensor& edge_weights) {
    const std::size_t n = view.num_nodes(), e = view.edges.size();
    if (edge_weights.shape() != Shape{e, 1})
        throw ShapeError("edge weights must be " + shape_string({e, 1}) + ", got " + shape_string(edge_weights.shape()));
    for (double w : edge_weights.values())
        if (!(w >= 0.0 && w <= 1.0)) throw ContractError("edge weight " + std::to_string(w) + " outside [0, 1]");

    const Tensor degree = tape.add_scalar(tape.scatter_add_rows(edge_weights, view.edges.row, n), 1.0);
    const Tensor inv_sqrt = tape.rsqrt(degree);
    NormalizedAdjacency adj;
    adj.edges = &view.edges;
    adj.edge_coef = tape.mul(tape.mul(edge_weights, tape.gather_rows(inv_sqrt, view.edges.row)),
                             tape.gather_rows(inv_sqrt, view.edges.col));
    adj.self_coef = tape.mul(inv_sqrt, inv_sqrt);
    return adj;
}

Tensor propagate(Tape& tape, const NormalizedAdjacency& adj, const Tensor& h) {
    return tape.propagate(adj.edges->row, adj.edges->col, adj.edge_coef, adj.self_coef, h);
}

Tensor normalize_masked_adjacency(Tape& tape, const GraphView& view, const Tensor& edge_weights) {
    const std::size_t n = view.num_nodes();
    Tensor identity = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) identity.at(i, i) = 1.0;
    return propagate(tape, normalize_adjacency(tape, view, edge_weights), identity);
}

MaskedAdjacency make_adjacency(Tape& tape, const GraphView& view, const Tensor& edge_weights, Backbone backbone) {
    MaskedAdjacency adj{&view, edge_weights, {}};
    if (backbone == Backbone::GCN) adj.normalized = normalize_adjacency(tape, view, edge_weights);
    return adj;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) { return {glorot_uniform(in, out, rng), zero_bias(out)}; }

Tensor Linear::forward(Tape& tape, const Tensor& x) const { return tape.add_row(tape.matmul(x, weight), bias); }

void Linear::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

GraphConv GraphConv::gcn(std::size_t in, std::size_t out, Rng& rng) {
    return GraphConv(GCNLayerParams{glorot_uniform(in, out, rng), zero_bias(out)});
}

GraphConv GraphConv::gin(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    GINLayerParams p;
    p.hidden = Linear::init(in, hidden, rng);
    p.output = Linear::init(hidden, out, rng);
    p.epsilon = Tensor::zeros({1, 1}, true);
    return GraphConv(std::move(p));
}

Backbone GraphConv::backbone() const { return as_gcn() ? Backbone::GCN : Backbone::GIN; }

std::size_t GraphConv::in_dim() const {
    return as_gcn() ? as_gcn()->weight.rows() : as_gin()->hidden.weight.rows();
}

std::size_t GraphConv::out_dim() const {
    return as_gcn() ? as_gcn()->weight.cols() : as_gin()->output.weight.cols();
}

Tensor GraphConv::forward(Tape& tape, const MaskedAdjacency& adj, const Tensor& h, bool activate) const {
    if (const auto* p = as_gcn()) {
        if (!adj.normalized.edges) throw ContractError("GCN layer needs a normalized adjacency");
        return gcn_layer(tape, *p, adj.normalized, h, activate);
    }
    return gin_layer(tape, *as_gin(), *adj.view, adj.weights, h, activate);
}

void GraphConv::collect(ParameterList& out, const std::string& prefix) const {
    if (const auto* p = as_gcn()) {
        out.push_back({prefix + ".weight", p->weight});
        out.push_back({prefix + ".bias", p->bias});
    } else {
        const auto* q = as_gin();
        q->hidden.collect(out, prefix + ".mlp.0");
        q->output.collect(out, prefix + ".mlp.1");
        out.push_back({prefix + ".eps", q->epsilon});
    }
}

Tensor gcn_layer(Tape& tape, const GCNLayerParams& params, const NormalizedAdjacency& adj, const Tensor& h,
                 bool activate) {
    if (h.cols() != params.weight.rows())
        throw ShapeError("gcn_layer: features have " + std::to_string(h.cols()) + " columns, layer expects " +
                         std::to_string(params.weight.rows()));
    Tensor out = tape.add_row(propagate(tape, adj, tape.matmul(h, params.weight)), params.bias);
    return activate ? tape.relu(out) : out;
}

Tensor gin_layer(Tape& tape, const GINLayerParams& params, const GraphView& view, const Tensor& edge_weights,
                 const Tensor& h, bool activate) {
    const std::size_t n = view.num_nodes();
    if (h.cols() != params.hidden.weight.rows())
        throw ShapeError("gin_layer: features have " + std::to_string(h.cols()) + " columns, layer expects " +
                         std::to_string(params.hidden.weight.rows()));
    const Tensor self = tape.add_scalar(tape.matmul(Tensor::filled({n, 1}, 1.0), params.epsilon), 1.0);
    const Tensor aggregated = tape.propagate(view.edges.row, view.edges.col, edge_weights, self, h);
    Tensor out = params.output.forward(tape, tape.relu(params.hidden.forward(tape, aggregated)));
    return activate ? tape.relu(out) : out;
}

EncoderParams EncoderParams::init(Backbone backbone, std::size_t in_dim, std::size_t hidden, std::size_t depth,
                                  Rng& rng) {
    if (depth < 1) throw ContractError("encoder depth must be at least 1");
    EncoderParams enc;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t in = l == 0 ? in_dim : hidden;
        enc.layers.push_back(backbone == Backbone::GCN ? GraphConv::gcn(in, hidden, rng)
                                                       : GraphConv::gin(in, hidden, hidden, rng));
    }
    return enc;
}

void EncoderParams::collect(ParameterList& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, prefix + ".layers." + std::to_string(l));
}

Tensor encoder_forward(Tape& tape, const EncoderParams& encoder, const GraphView& view) {
    return encoder_forward(tape, encoder, view, view.graph->features());
}

Tensor encoder_forward(Tape& tape, const EncoderParams& encoder, const GraphView& view, const Tensor& x) {
    if (encoder.layers.empty()) throw ContractError("encoder has no layers");
    const MaskedAdjacency adj = make_adjacency(tape, view, view.unit_weights(), encoder.layers.front().backbone());
    Tensor h = x;
    for (std::size_t l = 0; l < encoder.layers.size(); ++l)
        h = encoder.layers[l].forward(tape, adj, h, l + 1 < encoder.layers.size());
    return h;
}

Tensor readout_mean(Tape& tape, const Tensor& h) {
    if (h.rank() != 2 || h.rows() == 0) throw ContractError("readout over an empty node set");
    return tape.col_mean(h);
}

}  // namespace cal
