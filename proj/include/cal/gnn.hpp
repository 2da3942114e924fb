#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cal/graph.hpp"
#include "cal/optim.hpp"
#include "cal/tape.hpp"

namespace cal {

enum class Backbone { GCN, GIN };
std::string_view to_string(Backbone b);
Backbone parse_backbone(std::string_view name);

/// Per-graph structure reused by every forward pass over that graph.
struct GraphView {
    const Graph* graph = nullptr;
    DirectedEdges edges;

    explicit GraphView(const Graph& g) : graph(&g), edges(g.directed_edges()) {}
    std::size_t num_nodes() const { return graph->n; }
    /// (E x 1) constant tensor of ones, one entry per directed edge.
    Tensor unit_weights() const { return Tensor::filled({edges.size(), 1}, 1.0); }
};

/// Symmetrically normalized weighted adjacency D^{-1/2}(A_w + I)D^{-1/2},
/// kept in edge-list form: `edge_coef[e]` is the entry at (row[e], col[e]) and
/// `self_coef[i]` the diagonal. D is the row sum of A_w + I, so a zero-weight
/// edge contributes nothing to either endpoint.
struct NormalizedAdjacency {
    const DirectedEdges* edges = nullptr;
    Tensor edge_coef;
    Tensor self_coef;
};

/// Edge weights are differentiable; each must lie in [0, 1] (ContractError otherwise).
NormalizedAdjacency normalize_adjacency(Tape& tape, const GraphView& view, const Tensor& edge_weights);
/// Dense n x n materialization of `normalize_adjacency`.
Tensor normalize_masked_adjacency(Tape& tape, const GraphView& view, const Tensor& edge_weights);
Tensor propagate(Tape& tape, const NormalizedAdjacency& adj, const Tensor& h);

/// Edge weights of a graph as seen by one layer call. The normalized form is
/// only built for backbones that need it.
struct MaskedAdjacency {
    const GraphView* view = nullptr;
    Tensor weights;
    NormalizedAdjacency normalized;
};

MaskedAdjacency make_adjacency(Tape& tape, const GraphView& view, const Tensor& edge_weights, Backbone backbone);

struct Linear {
    Tensor weight;  // (in x out)
    Tensor bias;    // (1 x out)

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    Tensor forward(Tape& tape, const Tensor& x) const;
    void collect(ParameterList& out, const std::string& prefix) const;
};

struct GCNLayerParams {
    Tensor weight;
    Tensor bias;
};

struct GINLayerParams {
    Linear hidden;
    Linear output;
    Tensor epsilon;  // learnable scalar, starts at 0
};

/// One message-passing layer of either backbone.
class GraphConv {
public:
    GraphConv() = default;
    static GraphConv gcn(std::size_t in, std::size_t out, Rng& rng);
    static GraphConv gin(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

    Backbone backbone() const;
    std::size_t in_dim() const;
    std::size_t out_dim() const;

    /// GCN: act(Â h W + b). GIN: act(MLP((1 + eps) h_i + sum_j w_ij h_j)).
    Tensor forward(Tape& tape, const MaskedAdjacency& adj, const Tensor& h, bool activate) const;
    void collect(ParameterList& out, const std::string& prefix) const;

    const GCNLayerParams* as_gcn() const { return std::get_if<GCNLayerParams>(&params_); }
    const GINLayerParams* as_gin() const { return std::get_if<GINLayerParams>(&params_); }

private:
    explicit GraphConv(std::variant<GCNLayerParams, GINLayerParams> p) : params_(std::move(p)) {}
    std::variant<GCNLayerParams, GINLayerParams> params_;
};

Tensor gcn_layer(Tape& tape, const GCNLayerParams& params, const NormalizedAdjacency& adj, const Tensor& h,
                 bool activate = true);
Tensor gin_layer(Tape& tape, const GINLayerParams& params, const GraphView& view, const Tensor& edge_weights,
                 const Tensor& h, bool activate = true);

/// Stacked layers with relu between them and none after the last.
struct EncoderParams {
    std::vector<GraphConv> layers;

    static EncoderParams init(Backbone backbone, std::size_t in_dim, std::size_t hidden, std::size_t depth, Rng& rng);
    void collect(ParameterList& out, const std::string& prefix) const;
};

/// Node representations of the unmasked graph (all edge weights 1).
Tensor encoder_forward(Tape& tape, const EncoderParams& encoder, const GraphView& view);
Tensor encoder_forward(Tape& tape, const EncoderParams& encoder, const GraphView& view, const Tensor& x);

/// Column-wise mean over node rows; ContractError on zero rows.
Tensor readout_mean(Tape& tape, const Tensor& h);

}  // namespace cal
