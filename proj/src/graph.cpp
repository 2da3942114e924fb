#include "cal/graph.hpp"

#include <algorithm>
#include <set>

#include "cal/errors.hpp"

namespace cal {

std::string_view to_string(CausalKind kind) {
    switch (kind) {
        case CausalKind::House: return "House";
        case CausalKind::Cycle: return "Cycle";
        case CausalKind::Grid: return "Grid";
        case CausalKind::Diamond: return "Diamond";
    }
    return "?";
}

std::string_view to_string(TrivialKind kind) {
    switch (kind) {
        case TrivialKind::BA: return "BA";
        case TrivialKind::Tree: return "Tree";
    }
    return "?";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

CausalKind parse_causal_kind(std::string_view name) {
    for (auto k : kCausalKinds)
        if (to_string(k) == name) return k;
    throw FormatError("unknown causal kind '" + std::string(name) + "'");
}

TrivialKind parse_trivial_kind(std::string_view name) {
    for (auto k : kTrivialKinds)
        if (to_string(k) == name) return k;
    throw FormatError("unknown trivial kind '" + std::string(name) + "'");
}

Split parse_split(std::string_view name) {
    for (auto s : {Split::Train, Split::Val, Split::Test})
        if (to_string(s) == name) return s;
    throw FormatError("unknown split '" + std::string(name) + "'");
}

std::uint32_t degree_feature(std::size_t degree, std::size_t feature_dim) {
    if (feature_dim == 0) throw ContractError("degree_feature: feature_dim must be positive");
    return static_cast<std::uint32_t>(std::min(degree, feature_dim - 1));
}

Tensor Graph::features() const {
    Tensor x = Tensor::zeros({n, feature_dim});
    for (std::size_t i = 0; i < n; ++i) x.at(i, feature_index[i]) = 1.0;
    return x;
}

DirectedEdges Graph::directed_edges() const {
    DirectedEdges out;
    out.row.reserve(2 * edges.size());
    out.col.reserve(2 * edges.size());
    for (const auto& [a, b] : edges) {
        out.row.push_back(a);
        out.col.push_back(b);
        out.row.push_back(b);
        out.col.push_back(a);
    }
    return out;
}

std::vector<std::size_t> Graph::degrees() const {
    std::vector<std::size_t> deg(n, 0);
    for (const auto& [a, b] : edges) {
        ++deg[a];
        ++deg[b];
    }
    return deg;
}

void Graph::validate() const {
    std::set<Edge> seen;
    for (const auto& [a, b] : edges) {
        if (a >= n || b >= n)
            throw FormatError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") outside [0, " +
                              std::to_string(n) + ")");
        if (a == b) throw FormatError("self-loop on node " + std::to_string(a));
        if (!seen.insert(std::minmax(a, b)).second)
            throw FormatError("duplicate edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    }
    if (base_edge_count > edges.size()) throw FormatError("base edge count exceeds edge count");
    if (feature_index.size() != n)
        throw FormatError("feature rows " + std::to_string(feature_index.size()) + " != node count " +
                          std::to_string(n));
    for (auto f : feature_index)
        if (f >= feature_dim) throw FormatError("feature column " + std::to_string(f) + " out of range");
    if (causal_nodes)
        for (auto v : *causal_nodes)
            if (v >= n) throw FormatError("causal node " + std::to_string(v) + " out of range");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

}  // namespace cal
