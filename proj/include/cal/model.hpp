#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

#include "cal/gnn.hpp"

namespace cal {

/// What the causal/trivial head layers consume after masking: the raw node
/// features X, or the encoder's node representations H.
enum class HeadInput { Features, Hidden };
std::string_view to_string(HeadInput h);
HeadInput parse_head_input(std::string_view name);

struct ModelConfig {
    Backbone backbone = Backbone::GCN;
    std::size_t in_dim = 20;
    std::size_t hidden = 128;
    std::size_t depth = 3;
    std::size_t num_classes = 4;
    /// false: vanilla backbone, encoder -> mean readout -> classifier Φ_c.
    bool cal = true;
    HeadInput head_input = HeadInput::Features;
    /// Disabled attention channels are pinned at 0.5.
    bool node_attention = true;
    bool edge_attention = true;
    /// Average β over both directions of each undirected edge.
    bool symmetric_edge_attention = false;
    /// Use Φ_c as the intervention classifier Φ.
    bool tie_intervention_classifier = false;
    std::uint64_t seed = 0;
};

/// Two-layer MLPs producing (causal, trivial) logits per node and per directed
/// edge. The edge MLP's first layer acts on h_i || h_j; it is stored as the
/// two halves of that weight so that h_i W_src + h_j W_dst is computed
/// without materializing the concatenation.
struct AttentionParams {
    Linear node_hidden;
    Linear node_out;
    Tensor edge_src;   // (d x hidden)
    Tensor edge_dst;   // (d x hidden)
    Tensor edge_bias;  // (1 x hidden)
    Linear edge_out;

    static AttentionParams init(std::size_t dim, std::size_t hidden, Rng& rng);
};

struct HeadParams {
    GraphConv conv_c;
    GraphConv conv_t;
    Linear phi_c;
    Linear phi_t;
    Linear phi;
};

/// Per-element (causal, trivial) attention; both are (count x 1) and sum to 1.
struct AttentionScores {
    Tensor causal;
    Tensor trivial;
};

/// Soft masks; complements are computed as 1 - mask.
struct MaskSet {
    Tensor node;             // M_x, (n x 1)
    Tensor edge;             // M_a, (E x 1), one per directed edge
    Tensor node_complement;  // 1 - M_x
    Tensor edge_complement;  // 1 - M_a
};

struct BranchOutput {
    Tensor representation;  // (1 x d)
    Tensor logits;          // (1 x num_classes)
};

class CalModel {
public:
    explicit CalModel(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }

    EncoderParams encoder;
    AttentionParams attention;
    HeadParams head;

    /// Φ, or Φ_c when the intervention classifier is tied.
    const Linear& intervention_classifier() const;

    /// Every parameter tensor with its checkpoint name (tied tensors once).
    ParameterList parameters() const;
    /// Tensors that receive gradients under the model's configuration.
    ParameterList trainable_parameters() const;

private:
    ModelConfig config_;
};

AttentionScores node_attention(Tape& tape, const AttentionParams& attn, const Tensor& h);
AttentionScores edge_attention(Tape& tape, const AttentionParams& attn, const Tensor& h, const DirectedEdges& edges,
                               bool symmetric = false);
MaskSet build_masks(Tape& tape, const Tensor& node_causal, const Tensor& edge_causal);

/// h_Gc = readout(GConv_c(A ⊙ M_a, input ⊙ M_x)), z_Gc = Φ_c(h_Gc).
BranchOutput causal_forward(Tape& tape, const HeadParams& head, const GraphView& view, const Tensor& input,
                            const MaskSet& masks);
/// Mirror of causal_forward with the complementary masks, GConv_t and Φ_t.
BranchOutput trivial_forward(Tape& tape, const HeadParams& head, const GraphView& view, const Tensor& input,
                             const MaskSet& masks);
/// z_G' = Φ(h_Gc + h_Gt'). Works row-wise on stacked representations.
Tensor intervene_predict(Tape& tape, const Linear& phi, const Tensor& causal_repr, const Tensor& trivial_repr);

/// Everything a CAL forward over one graph produces.
struct GraphForward {
    Tensor hidden;
    AttentionScores node;
    AttentionScores edge;
    MaskSet masks;
    BranchOutput causal;
    BranchOutput trivial;
};

GraphForward forward_graph(Tape& tape, const CalModel& model, const GraphView& view);
/// Logits used for inference: z_Gc for CAL models, Φ_c(readout(H)) for vanilla ones.
Tensor inference_logits(Tape& tape, const CalModel& model, const GraphView& view);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);
std::size_t predict(const CalModel& model, const Graph& graph);

struct AttentionRecord {
    std::vector<double> node_causal;                        // α_c per node
    std::vector<std::tuple<NodeId, NodeId, double>> edges;  // (i, j, β_c) per directed edge
};

AttentionRecord export_attention(const CalModel& model, const Graph& graph);

}  // namespace cal
