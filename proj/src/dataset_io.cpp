#include "cal/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cal/errors.hpp"

namespace cal {
namespace {

std::vector<std::string_view> split_on(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, std::string_view what) {
    text = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw FormatError("bad " + std::string(what) + " '" + std::string(text) + "'", line);
    return value;
}

std::string_view field(std::string_view token, std::string_view key, std::size_t line) {
    if (token.size() <= key.size() || token.substr(0, key.size()) != key || token[key.size()] != '=')
        throw FormatError("expected field '" + std::string(key) + "='", line);
    return token.substr(key.size() + 1);
}

template <typename T>
std::vector<T> parse_list(std::string_view text, std::size_t line, std::string_view what) {
    std::vector<T> out;
    if (text.empty()) return out;
    for (auto part : split_on(text, ',')) out.push_back(parse_number<T>(part, line, what));
    return out;
}

template <typename T>
void write_list(std::ostream& out, const std::vector<T>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        out << values[i];
    }
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& ds) {
    out << kDatasetMagic << ' ' << kDatasetVersion << " graphs=" << ds.size() << " classes=" << ds.num_classes
        << " features=" << ds.feature_dim << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Graph& g = ds.graphs[i];
        out << "n=" << g.n << "\ty=" << g.label << "\tsplit=" << to_string(ds.split[i]);
        out << "\tcausal=" << (g.causal_kind ? to_string(*g.causal_kind) : "-");
        out << "\ttrivial=" << (g.trivial_kind ? to_string(*g.trivial_kind) : "-");
        out << "\tcausal_nodes=";
        if (g.causal_nodes)
            write_list(out, *g.causal_nodes);
        else
            out << '-';
        out << "\tbase_edges=" << g.base_edge_count << "\tedges=";
        for (std::size_t k = 0; k < g.edges.size(); ++k) {
            if (k) out << ',';
            out << g.edges[k].first << '-' << g.edges[k].second;
        }
        out << "\tfeatures=";
        write_list(out, g.feature_index);
        out << '\n';
    }
}

Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty dataset file", 1);
    const auto header = split_on(trim(line), ' ');
    if (header.size() != 5 || header[0] != kDatasetMagic)
        throw FormatError("missing CALDATA header", 1);
    if (parse_number<int>(header[1], 1, "version") != kDatasetVersion)
        throw FormatError("unsupported dataset version " + std::string(header[1]), 1);
    const auto count = parse_number<std::size_t>(field(header[2], "graphs", 1), 1, "graph count");
    Dataset ds;
    ds.num_classes = parse_number<std::size_t>(field(header[3], "classes", 1), 1, "class count");
    ds.feature_dim = parse_number<std::size_t>(field(header[4], "features", 1), 1, "feature dimension");
    ds.graphs.reserve(count);
    ds.split.reserve(count);

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto tokens = split_on(line, '\t');
        if (tokens.size() != 9) throw FormatError("expected 9 fields, got " + std::to_string(tokens.size()), lineno);
        Graph g;
        g.n = parse_number<std::size_t>(field(tokens[0], "n", lineno), lineno, "node count");
        g.label = parse_number<int>(field(tokens[1], "y", lineno), lineno, "label");
        try {
            ds.split.push_back(parse_split(field(tokens[2], "split", lineno)));
            const auto causal = field(tokens[3], "causal", lineno);
            if (causal != "-") g.causal_kind = parse_causal_kind(causal);
            const auto trivial = field(tokens[4], "trivial", lineno);
            if (trivial != "-") g.trivial_kind = parse_trivial_kind(trivial);
        } catch (const FormatError& e) {
            if (e.line()) throw;
            throw FormatError(e.what(), lineno);
        }
        const auto nodes = field(tokens[5], "causal_nodes", lineno);
        if (nodes != "-") g.causal_nodes = parse_list<NodeId>(nodes, lineno, "causal node");
        g.base_edge_count = parse_number<std::size_t>(field(tokens[6], "base_edges", lineno), lineno, "base edge count");
        const auto edges = field(tokens[7], "edges", lineno);
        if (!edges.empty()) {
            for (auto pair : split_on(edges, ',')) {
                const auto dash = pair.find('-');
                if (dash == std::string_view::npos) throw FormatError("bad edge '" + std::string(pair) + "'", lineno);
                g.edges.emplace_back(parse_number<NodeId>(pair.substr(0, dash), lineno, "edge endpoint"),
                                     parse_number<NodeId>(pair.substr(dash + 1), lineno, "edge endpoint"));
            }
        }
        g.feature_dim = ds.feature_dim;
        g.feature_index = parse_list<std::uint32_t>(field(tokens[8], "features", lineno), lineno, "feature column");
        try {
            g.validate();
        } catch (const FormatError& e) {
            throw FormatError(e.what(), lineno);
        }
        if (g.label < 0 || static_cast<std::size_t>(g.label) >= ds.num_classes)
            throw FormatError("label " + std::to_string(g.label) + " outside [0, classes)", lineno);
        ds.graphs.push_back(std::move(g));
    }
    if (ds.graphs.size() != count)
        throw FormatError("header declares " + std::to_string(count) + " graphs, found " +
                          std::to_string(ds.graphs.size()), lineno);
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset " + path.string());
    write_dataset(out, dataset);
    if (!out) throw IoError("failed writing dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset " + path.string());
    return read_dataset(in);
}

// ---------------------------------------------------------------------------
// TUDataset
// ---------------------------------------------------------------------------

namespace {

std::filesystem::path find_prefixed(const std::filesystem::path& dir, std::string_view suffix) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) return entry.path();
    }
    return {};
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) lines.push_back(line);
    return lines;
}

}  // namespace

Dataset load_tudataset(const std::filesystem::path& directory, std::size_t degree_feature_dim) {
    const auto a_path = find_prefixed(directory, "_A.txt");
    if (a_path.empty()) throw IoError("no *_A.txt in " + directory.string());
    const auto stem = a_path.filename().string();
    const auto prefix = directory / stem.substr(0, stem.size() - std::string_view("_A.txt").size());
    auto mandatory = [&](std::string_view suffix) {
        auto p = prefix;
        p += suffix;
        if (!std::filesystem::exists(p)) throw IoError("missing " + p.string());
        return p;
    };
    const auto indicator_lines = read_lines(mandatory("_graph_indicator.txt"));
    const auto label_lines = read_lines(mandatory("_graph_labels.txt"));
    const auto edge_lines = read_lines(a_path);
    auto node_label_path = prefix;
    node_label_path += "_node_labels.txt";
    const bool has_node_labels = std::filesystem::exists(node_label_path);

    const std::size_t num_nodes = indicator_lines.size();
    const std::size_t num_graphs = label_lines.size();
    std::vector<std::size_t> graph_of(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) {
        const auto gid = parse_number<long long>(indicator_lines[i], i + 1, "graph id");
        if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs)
            throw FormatError("graph id " + std::to_string(gid) + " outside [1, " + std::to_string(num_graphs) + "]",
                              i + 1);
        graph_of[i] = static_cast<std::size_t>(gid - 1);
        if (i > 0 && graph_of[i] < graph_of[i - 1]) throw FormatError("graph indicator is not sorted", i + 1);
    }

    Dataset ds;
    ds.graphs.resize(num_graphs);
    std::vector<std::size_t> first_node(num_graphs, num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) {
        auto& g = ds.graphs[graph_of[i]];
        first_node[graph_of[i]] = std::min(first_node[graph_of[i]], i);
        ++g.n;
    }

    std::vector<std::set<Edge>> seen(num_graphs);
    for (std::size_t k = 0; k < edge_lines.size(); ++k) {
        const auto parts = split_on(edge_lines[k], ',');
        if (parts.size() != 2) throw FormatError("expected 'row, col'", k + 1);
        const auto a = parse_number<long long>(parts[0], k + 1, "node id");
        const auto b = parse_number<long long>(parts[1], k + 1, "node id");
        if (a < 1 || b < 1 || static_cast<std::size_t>(a) > num_nodes || static_cast<std::size_t>(b) > num_nodes)
            throw FormatError("dangling node index in edge " + std::to_string(a) + ", " + std::to_string(b), k + 1);
        const std::size_t u = static_cast<std::size_t>(a - 1), v = static_cast<std::size_t>(b - 1);
        if (graph_of[u] != graph_of[v]) throw FormatError("edge joins two different graphs", k + 1);
        if (u == v) continue;
        const std::size_t gi = graph_of[u];
        const auto lu = static_cast<NodeId>(u - first_node[gi]), lv = static_cast<NodeId>(v - first_node[gi]);
        const Edge e = std::minmax(lu, lv);
        if (seen[gi].insert(e).second) ds.graphs[gi].edges.push_back(e);
    }

    if (has_node_labels) {
        const auto node_lines = read_lines(node_label_path);
        if (node_lines.size() != num_nodes)
            throw FormatError("node label count " + std::to_string(node_lines.size()) + " != node count " +
                              std::to_string(num_nodes));
        std::vector<long long> raw(num_nodes);
        std::map<long long, std::uint32_t> column;
        for (std::size_t i = 0; i < num_nodes; ++i) {
            raw[i] = parse_number<long long>(node_lines[i], i + 1, "node label");
            column.emplace(raw[i], 0);
        }
        std::uint32_t next = 0;
        for (auto& [label, col] : column) col = next++;
        ds.feature_dim = column.size();
        for (std::size_t i = 0; i < num_nodes; ++i) ds.graphs[graph_of[i]].feature_index.push_back(column.at(raw[i]));
    } else {
        ds.feature_dim = degree_feature_dim;
    }

    std::vector<long long> raw_labels(num_graphs);
    std::map<long long, int> class_of;
    for (std::size_t i = 0; i < num_graphs; ++i) {
        raw_labels[i] = parse_number<long long>(label_lines[i], i + 1, "graph label");
        class_of.emplace(raw_labels[i], 0);
    }
    int next_class = 0;
    for (auto& [label, cls] : class_of) cls = next_class++;
    ds.num_classes = class_of.size();

    for (std::size_t gi = 0; gi < num_graphs; ++gi) {
        Graph& g = ds.graphs[gi];
        g.base_edge_count = g.edges.size();
        g.feature_dim = ds.feature_dim;
        g.label = class_of.at(raw_labels[gi]);
        if (!has_node_labels) {
            const auto deg = g.degrees();
            for (auto d : deg) g.feature_index.push_back(degree_feature(d, degree_feature_dim));
        }
        g.validate();
    }
    ds.split.assign(num_graphs, Split::Train);
    return ds;
}

}  // namespace cal
