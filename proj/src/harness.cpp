#include "cal/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cal/dataset_io.hpp"
#include "cal/errors.hpp"

namespace cal {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end) throw UsageError("bad value '" + value + "' for " + key);
    return out;
}

bool parse_switch(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw UsageError("bad value '" + value + "' for " + key + " (expected on or off)");
}

std::string canonical_key(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
    ConfigFile cfg;
    cfg.text = text;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(number) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw UsageError("config line " + std::to_string(number) + ": empty key");
        cfg.entries.emplace_back(std::move(key), trim(t.substr(eq + 1)));
    }
    return cfg;
}

ConfigFile read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return parse_config(s.str());
}

void set_train_option(TrainConfig& c, const std::string& raw_key, const std::string& v) {
    const std::string key = canonical_key(raw_key);
    if (key == "lambda1") c.lambda1 = parse_number<double>(key, v);
    else if (key == "lambda2") c.lambda2 = parse_number<double>(key, v);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, v);
    else if (key == "batch-size") c.batch_size = parse_number<std::size_t>(key, v);
    else if (key == "lr" || key == "learning-rate") c.learning_rate = parse_number<double>(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "backbone") {
        try {
            c.backbone = parse_backbone(v);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    } else if (key == "cal") c.cal_enabled = parse_switch(key, v);
    else if (key == "shuffle") c.shuffle_mode = parse_shuffle_mode(v);
    else if (key == "intervention-samples") c.intervention_samples = parse_number<std::size_t>(key, v);
    else if (key == "hidden") c.hidden = parse_number<std::size_t>(key, v);
    else if (key == "depth") c.depth = parse_number<std::size_t>(key, v);
    else if (key == "head-input") c.head_input = parse_head_input(v);
    else if (key == "node-attention") c.node_attention = parse_switch(key, v);
    else if (key == "edge-attention") c.edge_attention = parse_switch(key, v);
    else if (key == "symmetric-edges") c.symmetric_edge_attention = parse_switch(key, v);
    else if (key == "tie-phi") c.tie_intervention_classifier = parse_switch(key, v);
    else throw UsageError("unknown option '" + raw_key + "'");
}

void apply_config(TrainConfig& config, const ConfigFile& file) {
    for (const auto& [k, v] : file.entries) set_train_option(config, k, v);
}

std::filesystem::path output_root() {
    const char* root = std::getenv("CAL_OUTPUT_ROOT");
    return root && *root ? std::filesystem::path(root) : std::filesystem::path();
}

std::filesystem::path resolve_output(const std::filesystem::path& path) {
    if (path.is_absolute()) return path;
    const auto root = output_root();
    return root.empty() ? path : root / path;
}

void DatasetSource::validate() const {
    const int count = int(synthetic.has_value()) + int(tudataset.has_value()) + int(file.has_value());
    if (count != 1) throw UsageError("give exactly one dataset source");
}

Dataset DatasetSource::load() const {
    validate();
    if (synthetic) return make_synthetic(*synthetic);
    if (tudataset) return load_tudataset(*tudataset);
    return load_dataset(*file);
}

json to_json(const TrainConfig& c) {
    return json{{"lambda1", c.lambda1},
                {"lambda2", c.lambda2},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"seed", c.seed},
                {"backbone", to_string(c.backbone)},
                {"cal", c.cal_enabled},
                {"shuffle", to_string(c.shuffle_mode)},
                {"intervention_samples", c.intervention_samples},
                {"hidden", c.hidden},
                {"depth", c.depth},
                {"head_input", to_string(c.head_input)},
                {"node_attention", c.node_attention},
                {"edge_attention", c.edge_attention},
                {"symmetric_edges", c.symmetric_edge_attention},
                {"tie_phi", c.tie_intervention_classifier}};
}

TrainConfig train_config_from_json(const json& j) {
    try {
        TrainConfig c;
        c.lambda1 = j.at("lambda1").get<double>();
        c.lambda2 = j.at("lambda2").get<double>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.backbone = parse_backbone(j.at("backbone").get<std::string>());
        c.cal_enabled = j.at("cal").get<bool>();
        c.shuffle_mode = parse_shuffle_mode(j.at("shuffle").get<std::string>());
        c.intervention_samples = j.at("intervention_samples").get<std::size_t>();
        c.hidden = j.at("hidden").get<std::size_t>();
        c.depth = j.at("depth").get<std::size_t>();
        c.head_input = parse_head_input(j.at("head_input").get<std::string>());
        c.node_attention = j.at("node_attention").get<bool>();
        c.edge_attention = j.at("edge_attention").get<bool>();
        c.symmetric_edge_attention = j.at("symmetric_edges").get<bool>();
        c.tie_intervention_classifier = j.at("tie_phi").get<bool>();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("run record config: ") + e.what());
    }
}

json to_json(const RunRecord& r, const Dataset& dataset) {
    json epochs = json::array();
    for (const auto& e : r.epochs) {
        json row{{"epoch", e.epoch}, {"loss_sup", e.loss.sup}};
        if (r.config.cal_enabled) {
            row["loss_unif"] = e.loss.unif;
            row["loss_caus"] = e.loss.caus;
            row["loss_total"] = e.loss.total;
        }
        row["val_accuracy"] = e.val_accuracy ? json(*e.val_accuracy) : json(nullptr);
        epochs.push_back(std::move(row));
    }
    return json{{"config", to_json(r.config)},
                {"config_text", r.config_text},
                {"dataset", {{"graphs", dataset.size()}, {"classes", dataset.num_classes}, {"features", dataset.feature_dim}}},
                {"epochs", std::move(epochs)},
                {"best_epoch", r.best_epoch},
                {"best_val_accuracy", r.best_val_accuracy ? json(*r.best_val_accuracy) : json(nullptr)},
                {"test_accuracy_best", r.test_accuracy_best},
                {"test_accuracy_last", r.test_accuracy_last},
                {"test_confusion", r.test.confusion}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

// ---- sweeps

void apply_variant(TrainConfig& c, const std::string& variant) {
    if (variant == "cal") {
        c.cal_enabled = true;
        c.shuffle_mode = ShuffleMode::Random;
    } else if (variant == "vanilla") {
        c.cal_enabled = false;
    } else if (variant == "ordered") {
        c.cal_enabled = true;
        c.shuffle_mode = ShuffleMode::Ordered;
    } else {
        throw UsageError("unknown variant '" + variant + "' (expected cal, vanilla or ordered)");
    }
}

double median(std::vector<double> v) {
    if (v.empty()) throw ContractError("median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double SweepResult::accuracy(const std::string& variant, double bias) const {
    std::vector<double> acc;
    for (const auto& c : cells)
        if (c.variant == variant && c.bias == bias) acc.push_back(c.accuracy);
    if (acc.empty()) throw ContractError("no sweep cells for " + variant + " at bias " + shortest(bias));
    return median(std::move(acc));
}

double SweepResult::discount(const std::string& variant, double bias) const {
    if (std::find(biases.begin(), biases.end(), 0.5) == biases.end())
        throw ContractError("discount needs the unbiased level 0.5 in the sweep");
    return accuracy(variant, bias) / accuracy(variant, 0.5);
}

json to_json(const SweepResult& r) {
    json cells = json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"bias", c.bias}, {"seed", c.seed}, {"variant", c.variant}, {"accuracy", c.accuracy}});
    json summary = json::array();
    const bool has_half = std::find(r.biases.begin(), r.biases.end(), 0.5) != r.biases.end();
    for (const auto& v : r.variants)
        for (double b : r.biases) {
            json row{{"variant", v}, {"bias", b}, {"median_accuracy", r.accuracy(v, b)}};
            row["discount"] = has_half ? json(r.discount(v, b)) : json(nullptr);
            summary.push_back(std::move(row));
        }
    return json{{"biases", r.biases},
                {"seeds", r.seeds},
                {"variants", r.variants},
                {"aggregate", "median over seeds"},
                {"cells", std::move(cells)},
                {"summary", std::move(summary)}};
}

std::string sweep_csv(const SweepResult& r) {
    std::ostringstream out;
    out << "variant,bias";
    for (auto s : r.seeds) out << ",accuracy_seed" << s;
    out << ",median,discount\n";
    const bool has_half = std::find(r.biases.begin(), r.biases.end(), 0.5) != r.biases.end();
    for (const auto& v : r.variants)
        for (double b : r.biases) {
            out << v << ',' << shortest(b);
            for (auto s : r.seeds) {
                auto it = std::find_if(r.cells.begin(), r.cells.end(), [&](const SweepCell& c) {
                    return c.variant == v && c.bias == b && c.seed == s;
                });
                out << ',' << (it == r.cells.end() ? std::string() : shortest(it->accuracy));
            }
            out << ',' << shortest(r.accuracy(v, b)) << ',' << (has_half ? shortest(r.discount(v, b)) : "") << '\n';
        }
    return out.str();
}

SweepResult run_sweep(const std::vector<double>& biases, const std::vector<std::uint64_t>& seeds,
                      const std::vector<std::string>& variants, const CellRunner& run) {
    if (biases.empty() || seeds.empty() || variants.empty()) throw UsageError("sweep needs biases, seeds and variants");
    SweepResult r{biases, seeds, variants, {}};
    for (double b : biases)
        for (auto s : seeds)
            for (const auto& v : variants) r.cells.push_back({b, s, v, run(b, s, v)});
    return r;
}

// ---- confusion

std::optional<std::size_t> ContextConfusion::modal_wrong_class(std::optional<std::size_t> exclude_truth) const {
    const std::size_t k = counts.size();
    std::vector<std::size_t> column(k, 0);
    for (std::size_t t = 0; t < k; ++t) {
        if (exclude_truth && *exclude_truth == t) continue;
        for (std::size_t p = 0; p < k; ++p) column[p] += counts[t][p];
    }
    const auto best = std::max_element(column.begin(), column.end());
    if (best == column.end() || *best == 0) return std::nullopt;
    return static_cast<std::size_t>(best - column.begin());
}

std::array<ContextConfusion, 2> confusion_by_context(const Dataset& dataset, const Evaluation& eval) {
    const std::size_t k = dataset.num_classes;
    std::array<ContextConfusion, 2> out;
    for (std::size_t c = 0; c < 2; ++c) {
        out[c].context = kTrivialKinds[c];
        out[c].counts.assign(k, std::vector<std::size_t>(k, 0));
        out[c].normalized.assign(k, std::vector<double>(k, 0.0));
    }
    if (eval.indices.size() != eval.predictions.size()) throw ContractError("evaluation indices and predictions differ");
    for (std::size_t i = 0; i < eval.indices.size(); ++i) {
        const Graph& g = dataset.graphs.at(eval.indices[i]);
        const auto truth = static_cast<std::size_t>(g.label);
        const std::size_t pred = eval.predictions[i];
        if (!g.trivial_kind || pred == truth) continue;
        auto& ctx = out[static_cast<std::size_t>(*g.trivial_kind)];
        ++ctx.counts[truth][pred];
        ++ctx.misclassified;
    }
    for (auto& ctx : out)
        for (std::size_t t = 0; t < k; ++t) {
            const auto total = std::accumulate(ctx.counts[t].begin(), ctx.counts[t].end(), std::size_t{0});
            if (total == 0) continue;
            for (std::size_t p = 0; p < k; ++p)
                ctx.normalized[t][p] = static_cast<double>(ctx.counts[t][p]) / static_cast<double>(total);
        }
    return out;
}

json to_json(const std::array<ContextConfusion, 2>& confusion) {
    json out = json::object();
    for (const auto& ctx : confusion) {
        json entry{{"misclassified", ctx.misclassified}};
        if (ctx.empty()) {
            entry["matrix"] = "EMPTY";
            entry["modal_wrong_class"] = nullptr;
        } else {
            entry["matrix"] = ctx.normalized;
            entry["counts"] = ctx.counts;
            const auto modal = ctx.modal_wrong_class();
            entry["modal_wrong_class"] = modal ? json(*modal) : json(nullptr);
        }
        out[std::string(to_string(ctx.context))] = std::move(entry);
    }
    return out;
}

// ---- attention export

int gray_intensity(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("attention score outside [0, 1]");
    return static_cast<int>(std::lround(255.0 * alpha));
}

double pen_width(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("attention score outside [0, 1]");
    return 0.5 + 3.5 * beta;
}

std::string attention_dot(const Graph& graph, const AttentionRecord& record, const std::string& name) {
    if (record.node_causal.size() != graph.n) throw ContractError("attention record does not match graph");
    std::ostringstream out;
    out << "digraph \"" << name << "\" {\n";
    out << "  node [shape=circle, style=filled, fontsize=8];\n";
    char buf[64];
    for (std::size_t i = 0; i < graph.n; ++i) {
        const int level = 255 - gray_intensity(record.node_causal[i]);
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
        out << "  " << i << " [fillcolor=\"" << buf << "\", fontcolor=\"" << (level < 128 ? "white" : "black")
            << "\", alpha=\"" << shortest(record.node_causal[i]) << "\"];\n";
    }
    for (const auto& [a, b, beta] : record.edges) {
        std::snprintf(buf, sizeof buf, "%.4f", pen_width(beta));
        out << "  " << a << " -> " << b << " [penwidth=" << buf << ", beta=\"" << shortest(beta) << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

json to_json(const AttentionRecord& record) {
    json edges = json::array();
    for (const auto& [a, b, beta] : record.edges) edges.push_back({{"source", a}, {"target", b}, {"beta_c", beta}});
    return json{{"alpha_c", record.node_causal}, {"edges", std::move(edges)}};
}

// ---- cross-validation

std::vector<std::size_t> stratified_folds(const Dataset& dataset, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw UsageError("need at least 2 folds");
    if (dataset.size() < folds)
        throw UsageError("dataset has " + std::to_string(dataset.size()) + " graphs, fewer than " +
                         std::to_string(folds) + " folds");
    std::seed_seq seq{seed, std::uint64_t{0x666f6c64}};
    Rng rng(seq);
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class.at(static_cast<std::size_t>(dataset.graphs[i].label)).push_back(i);
    std::vector<std::size_t> fold_of(dataset.size());
    std::size_t position = 0;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i : members) fold_of[i] = position++ % folds;
    }
    return fold_of;
}

Dataset with_fold_split(Dataset dataset, const std::vector<std::size_t>& fold_of, std::size_t k, std::size_t folds) {
    if (fold_of.size() != dataset.size() || k >= folds) throw ContractError("fold assignment does not match dataset");
    const std::size_t val = (k + folds - 1) % folds;
    dataset.split.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        dataset.split[i] = fold_of[i] == k ? Split::Test : fold_of[i] == val ? Split::Val : Split::Train;
    return dataset;
}

CrossvalResult crossval(const Dataset& dataset, const TrainConfig& config, std::size_t folds,
                        const std::function<void(std::size_t, const RunRecord&)>& on_fold) {
    const auto fold_of = stratified_folds(dataset, folds, config.seed);
    CrossvalResult out;
    for (std::size_t k = 0; k < folds; ++k) {
        const Dataset split = with_fold_split(dataset, fold_of, k, folds);
        CalModel model(model_config(config, split));
        RunRecord rec = fit(model, split, config);
        out.accuracies.push_back(rec.test_accuracy_best);
        if (on_fold) on_fold(k, rec);
        out.folds.push_back(std::move(rec));
    }
    const double n = static_cast<double>(folds);
    out.mean = std::accumulate(out.accuracies.begin(), out.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : out.accuracies) ss += (a - out.mean) * (a - out.mean);
    out.stddev = std::sqrt(ss / n);
    return out;
}

json to_json(const CrossvalResult& r, const Dataset& dataset) {
    json folds = json::array();
    for (std::size_t k = 0; k < r.folds.size(); ++k) {
        json f = to_json(r.folds[k], dataset);
        f["fold"] = k;
        folds.push_back(std::move(f));
    }
    return json{{"folds", std::move(folds)}, {"accuracies", r.accuracies}, {"mean", r.mean}, {"stddev", r.stddev}};
}

}  // namespace cal
