#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cal/tape.hpp"
#include "cal/tensor.hpp"

namespace cal {

enum class CausalKind : std::uint8_t { House, Cycle, Grid, Diamond };
enum class TrivialKind : std::uint8_t { BA, Tree };
enum class Split : std::uint8_t { Train, Val, Test };

inline constexpr CausalKind kCausalKinds[] = {CausalKind::House, CausalKind::Cycle, CausalKind::Grid,
                                              CausalKind::Diamond};
inline constexpr TrivialKind kTrivialKinds[] = {TrivialKind::BA, TrivialKind::Tree};

std::string_view to_string(CausalKind kind);
std::string_view to_string(TrivialKind kind);
std::string_view to_string(Split split);
/// Parsers throw FormatError on unknown names.
CausalKind parse_causal_kind(std::string_view name);
TrivialKind parse_trivial_kind(std::string_view name);
Split parse_split(std::string_view name);

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Both orientations of every undirected edge. Directed edge 2k is (a -> b) and
/// 2k + 1 is (b -> a) for stored edge k = (a, b), so `reverse(e) == e ^ 1`.
struct DirectedEdges {
    Index row;
    Index col;

    std::size_t size() const noexcept { return row.size(); }
    static std::size_t reverse(std::size_t e) noexcept { return e ^ 1u; }
};

/// Undirected graph with one-hot node features.
///
/// Features are stored by their hot column (`feature_index[i]` for node i);
/// `features()` materializes the n x feature_dim matrix. Edges in
/// [0, base_edge_count) form the graph before random perturbation; the rest
/// were added by perturbation.
struct Graph {
    std::size_t n = 0;
    std::vector<Edge> edges;
    std::size_t base_edge_count = 0;
    std::size_t feature_dim = 0;
    std::vector<std::uint32_t> feature_index;
    int label = 0;
    std::optional<CausalKind> causal_kind;
    std::optional<TrivialKind> trivial_kind;
    std::optional<std::vector<NodeId>> causal_nodes;

    Tensor features() const;
    DirectedEdges directed_edges() const;
    std::vector<std::size_t> degrees() const;

    /// Throws FormatError when an invariant does not hold: endpoint range,
    /// self-loops, duplicate pairs, feature row count or one-hot range.
    void validate() const;

    bool operator==(const Graph&) const = default;
};

struct Dataset {
    std::vector<Graph> graphs;
    std::vector<Split> split;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;

    std::size_t size() const noexcept { return graphs.size(); }
    /// Indices of graphs assigned to `s`, in dataset order.
    std::vector<std::size_t> indices(Split s) const;

    bool operator==(const Dataset&) const = default;
};

/// One-hot column for a node of degree `degree` with `feature_dim` columns:
/// degrees at or above feature_dim - 1 share the last column.
std::uint32_t degree_feature(std::size_t degree, std::size_t feature_dim);

}  // namespace cal
