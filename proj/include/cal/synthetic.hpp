#pragma once

#include <cstdint>
#include <vector>

#include "cal/graph.hpp"
#include "cal/optim.hpp"

namespace cal {

/// Parameters of the biased motif benchmark. `bias` is the fraction of
/// House graphs whose trivial part is a Tree in train and val; every other
/// class uses 1 - bias there, and the test split is balanced at 0.5.
struct SynSpec {
    double bias = 0.5;
    std::size_t n_per_class = 2000;
    std::size_t trivial_size = 230;
    std::size_t ba_attach = 2;
    double perturb_frac = 0.10;
    std::size_t feature_dim = 20;
    std::uint64_t seed = 0;

    /// Throws UsageError when out of range.
    void validate() const;
};

/// Node count and undirected edges of a building block.
struct Fragment {
    std::size_t n = 0;
    std::vector<Edge> edges;
};

/// Tree: balanced binary tree filled breadth-first (node i has children 2i+1, 2i+2).
/// BA: seed edge (0, 1), then each new node attaches to `ba_attach` distinct
/// existing nodes chosen proportionally to degree.
Fragment gen_trivial(TrivialKind kind, std::size_t size, std::size_t ba_attach, Rng& rng);

/// House (5 nodes, 6 edges), Cycle (6, 6), Grid (3x3 lattice, 9, 12),
/// Diamond (octahedron: two apexes on a shared 4-cycle, 6, 12).
Fragment gen_motif(CausalKind kind);

/// Trivial part on nodes [0, T), motif on [T, T + k), one bridge edge, then
/// floor(perturb_frac * |E|) random new edges; features are one-hot degrees.
Graph assemble_graph(TrivialKind trivial, CausalKind causal, const SynSpec& spec, Rng& rng);

/// Independent generator stream for graph `index` of a dataset seeded with `seed`.
Rng graph_stream(std::uint64_t seed, std::uint64_t index);

Dataset make_synthetic(const SynSpec& spec);

/// #(Tree and House) / #House over graphs of `dataset` whose split is in `splits`.
/// Throws ContractError when the portion holds no House graph.
double compute_bias(const Dataset& dataset, std::initializer_list<Split> splits);
double compute_bias(const std::vector<Graph>& graphs);

}  // namespace cal
