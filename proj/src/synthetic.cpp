#include "cal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "cal/errors.hpp"

namespace cal {
namespace {

struct Slot {
    CausalKind causal;
    TrivialKind trivial;
    Split split;
};

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

double tree_share(CausalKind causal, Split split, double bias) {
    if (split == Split::Test) return 0.5;
    return causal == CausalKind::House ? bias : 1.0 - bias;
}

}  // namespace

void SynSpec::validate() const {
    if (!(bias >= 0.0 && bias <= 1.0)) throw UsageError("bias must lie in [0, 1], got " + std::to_string(bias));
    if (n_per_class < 1) throw UsageError("n_per_class must be at least 1");
    if (trivial_size < 2) throw UsageError("trivial_size must be at least 2");
    if (ba_attach < 1) throw UsageError("ba_attach must be at least 1");
    if (!(perturb_frac >= 0.0)) throw UsageError("perturb_frac must be non-negative");
    if (feature_dim < 1) throw UsageError("feature_dim must be at least 1");
}

Fragment gen_trivial(TrivialKind kind, std::size_t size, std::size_t ba_attach, Rng& rng) {
    if (size < 2) throw ContractError("trivial subgraph needs at least 2 nodes");
    Fragment f;
    f.n = size;
    switch (kind) {
        case TrivialKind::Tree:
            for (std::size_t i = 1; i < size; ++i)
                f.edges.emplace_back(static_cast<NodeId>((i - 1) / 2), static_cast<NodeId>(i));
            return f;
        case TrivialKind::BA: {
            if (ba_attach < 1) throw ContractError("BA attachment must be at least 1");
            f.edges.emplace_back(0, 1);
            // Each node appears once per incident edge end.
            std::vector<NodeId> ends = {0, 1};
            std::vector<NodeId> targets;
            for (std::size_t v = 2; v < size; ++v) {
                const std::size_t m = std::min(ba_attach, v);
                targets.clear();
                std::uniform_int_distribution<std::size_t> pick(0, ends.size() - 1);
                if (m == v) {
                    for (NodeId u = 0; u < v; ++u) targets.push_back(u);
                } else {
                    while (targets.size() < m) {
                        const NodeId u = ends[pick(rng)];
                        if (std::find(targets.begin(), targets.end(), u) == targets.end()) targets.push_back(u);
                    }
                }
                for (NodeId u : targets) {
                    f.edges.emplace_back(u, static_cast<NodeId>(v));
                    ends.push_back(u);
                    ends.push_back(static_cast<NodeId>(v));
                }
            }
            return f;
        }
    }
    throw ContractError("unknown trivial kind");
}

Fragment gen_motif(CausalKind kind) {
    switch (kind) {
        case CausalKind::House:
            // 4-cycle base 0-1-2-3, roof apex 4 over the 0-1 side.
            return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}}};
        case CausalKind::Cycle:
            return {6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}}};
        case CausalKind::Grid: {
            Fragment f{9, {}};
            for (NodeId r = 0; r < 3; ++r)
                for (NodeId c = 0; c < 3; ++c) {
                    const NodeId v = 3 * r + c;
                    if (c + 1 < 3) f.edges.emplace_back(v, v + 1);
                    if (r + 1 < 3) f.edges.emplace_back(v, v + 3);
                }
            return f;
        }
        case CausalKind::Diamond:
            return {6, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 0}, {4, 1}, {4, 2}, {4, 3}, {5, 0}, {5, 1}, {5, 2}, {5, 3}}};
    }
    throw ContractError("unknown causal kind");
}

Graph assemble_graph(TrivialKind trivial, CausalKind causal, const SynSpec& spec, Rng& rng) {
    const Fragment base = gen_trivial(trivial, spec.trivial_size, spec.ba_attach, rng);
    const Fragment motif = gen_motif(causal);
    const auto offset = static_cast<NodeId>(base.n);

    Graph g;
    g.n = base.n + motif.n;
    g.edges = base.edges;
    for (const auto& [a, b] : motif.edges) g.edges.emplace_back(a + offset, b + offset);

    std::uniform_int_distribution<NodeId> motif_node(0, static_cast<NodeId>(motif.n - 1));
    std::uniform_int_distribution<NodeId> base_node(0, static_cast<NodeId>(base.n - 1));
    const NodeId anchor = motif_node(rng) + offset;
    g.edges.emplace_back(base_node(rng), anchor);
    g.base_edge_count = g.edges.size();

    std::unordered_set<std::uint64_t> present;
    auto key = [&](NodeId a, NodeId b) {
        auto [lo, hi] = std::minmax(a, b);
        return static_cast<std::uint64_t>(lo) * g.n + hi;
    };
    for (const auto& [a, b] : g.edges) present.insert(key(a, b));

    const auto extra = static_cast<std::size_t>(std::floor(spec.perturb_frac * static_cast<double>(g.edges.size())));
    const std::size_t capacity = g.n * (g.n - 1) / 2 - g.edges.size();
    if (extra > capacity) throw ContractError("perturbation asks for more edges than the graph can hold");
    std::uniform_int_distribution<NodeId> any_node(0, static_cast<NodeId>(g.n - 1));
    while (g.edges.size() < g.base_edge_count + extra) {
        const NodeId a = any_node(rng), b = any_node(rng);
        if (a == b || !present.insert(key(a, b)).second) continue;
        g.edges.emplace_back(a, b);
    }

    g.feature_dim = spec.feature_dim;
    const auto deg = g.degrees();
    g.feature_index.resize(g.n);
    for (std::size_t i = 0; i < g.n; ++i) g.feature_index[i] = degree_feature(deg[i], spec.feature_dim);

    g.label = static_cast<int>(causal);
    g.causal_kind = causal;
    g.trivial_kind = trivial;
    std::vector<NodeId> nodes(motif.n);
    for (std::size_t i = 0; i < motif.n; ++i) nodes[i] = offset + static_cast<NodeId>(i);
    g.causal_nodes = std::move(nodes);
    return g;
}

Rng graph_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
    return Rng(seq);
}

Dataset make_synthetic(const SynSpec& spec) {
    spec.validate();
    const std::size_t n_train = rounded(0.7 * static_cast<double>(spec.n_per_class));
    const std::size_t n_val = std::min(rounded(0.1 * static_cast<double>(spec.n_per_class)), spec.n_per_class - n_train);
    const std::size_t n_test = spec.n_per_class - n_train - n_val;

    std::vector<Slot> slots;
    slots.reserve(spec.n_per_class * 4);
    for (CausalKind causal : kCausalKinds) {
        for (auto [split, count] : {std::pair{Split::Train, n_train}, {Split::Val, n_val}, {Split::Test, n_test}}) {
            const std::size_t trees = rounded(tree_share(causal, split, spec.bias) * static_cast<double>(count));
            for (std::size_t k = 0; k < count; ++k)
                slots.push_back({causal, k < trees ? TrivialKind::Tree : TrivialKind::BA, split});
        }
    }
    Rng order = graph_stream(spec.seed, ~std::uint64_t{0});
    std::shuffle(slots.begin(), slots.end(), order);

    Dataset ds;
    ds.num_classes = 4;
    ds.feature_dim = spec.feature_dim;
    ds.graphs.reserve(slots.size());
    ds.split.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        Rng rng = graph_stream(spec.seed, i);
        ds.graphs.push_back(assemble_graph(slots[i].trivial, slots[i].causal, spec, rng));
        ds.split.push_back(slots[i].split);
    }
    return ds;
}

namespace {

template <typename Range>
double bias_of(const Range& graphs) {
    std::size_t house = 0, tree_house = 0;
    for (const Graph& g : graphs) {
        if (g.causal_kind != CausalKind::House) continue;
        ++house;
        if (g.trivial_kind == TrivialKind::Tree) ++tree_house;
    }
    if (house == 0) throw ContractError("bias is undefined for a portion without House graphs");
    return static_cast<double>(tree_house) / static_cast<double>(house);
}

}  // namespace

double compute_bias(const std::vector<Graph>& graphs) { return bias_of(graphs); }

double compute_bias(const Dataset& dataset, std::initializer_list<Split> splits) {
    std::vector<std::reference_wrapper<const Graph>> portion;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (std::find(splits.begin(), splits.end(), dataset.split[i]) != splits.end())
            portion.emplace_back(dataset.graphs[i]);
    return bias_of(portion);
}

}  // namespace cal
