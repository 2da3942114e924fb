#include "cal/cli.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "cal/checkpoint.hpp"
#include "cal/dataset_io.hpp"
#include "cal/errors.hpp"
#include "cal/harness.hpp"

namespace cal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainKey {
    const char* name;
    const char* help;
};

const TrainKey kTrainKeys[] = {
    {"lambda1", "weight of the uniform-prediction loss on the trivial branch (default 0.5)"},
    {"lambda2", "weight of the intervention loss (default 0.5)"},
    {"epochs", "training epochs (default 100)"},
    {"batch-size", "graphs per optimizer step (default 128)"},
    {"lr", "Adam learning rate (default 0.001)"},
    {"seed", "initialization, shuffling and pairing seed (default 0)"},
    {"backbone", "gcn or gin (default gcn)"},
    {"cal", "on, or off for the plain backbone (default on)"},
    {"shuffle", "random or ordered pairing for the intervention loss (default random)"},
    {"intervention-samples", "pairings drawn per batch (default 1)"},
    {"hidden", "hidden width (default 128)"},
    {"depth", "encoder layers (default 3)"},
    {"head-input", "features or hidden: what the masked branches propagate (default features)"},
    {"node-attention", "on/off; off fixes node scores at 0.5"},
    {"edge-attention", "on/off; off fixes edge scores at 0.5"},
    {"symmetric-edges", "on/off; average the two directions of each edge score"},
    {"tie-phi", "on/off; reuse the causal classifier for intervened predictions"},
};

/// Training flags are collected as text, then applied in order: defaults,
/// flags, config file.
struct TrainFlags {
    std::map<std::string, std::string> values;
    std::string config_path;

    void attach(CLI::App* app) {
        for (const auto& key : kTrainKeys) app->add_option(std::string("--") + key.name, values[key.name], key.help);
        app->add_option("--config", config_path, "key = value file; its entries override flags");
    }

    std::pair<TrainConfig, std::string> build(const CLI::App* app) const {
        TrainConfig c;
        for (const auto& key : kTrainKeys)
            if (app->count(std::string("--") + key.name)) set_train_option(c, key.name, values.at(key.name));
        std::string text;
        if (!config_path.empty()) {
            const ConfigFile file = read_config_file(config_path);
            apply_config(c, file);
            text = file.text;
        }
        c.validate();
        return {c, text};
    }
};

std::string fmt(double v, const char* format = "%.4f") {
    char buf[32];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

struct LoadedRun {
    TrainConfig config;
    CalModel model;
};

LoadedRun load_run(const fs::path& dir, const Dataset& dataset) {
    std::ifstream in(dir / "run.json");
    if (!in) throw IoError("cannot open " + (dir / "run.json").string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("run.json: ") + e.what());
    }
    const TrainConfig config = train_config_from_json(j.at("config"));
    const auto& ds = j.at("dataset");
    if (ds.at("classes").get<std::size_t>() != dataset.num_classes ||
        ds.at("features").get<std::size_t>() != dataset.feature_dim)
        throw FormatError("dataset does not match the trained model (classes or feature width differ)");
    CalModel model(model_config(config, dataset));
    load_checkpoint(dir / "model.ckpt", model.parameters());
    return {config, std::move(model)};
}

void print_matrix(std::ostream& out, const std::vector<std::vector<double>>& m) {
    auto name = [](std::size_t k) { return k < 4 ? std::string(to_string(kCausalKinds[k])) : std::to_string(k); };
    out << "  " << std::string(9, ' ');
    for (std::size_t c = 0; c < m.size(); ++c) out << std::string(name(c).size() < 8 ? 8 - name(c).size() : 1, ' ') << name(c);
    out << '\n';
    for (std::size_t r = 0; r < m.size(); ++r) {
        const std::string n = name(r);
        out << "  " << n << std::string(n.size() < 9 ? 9 - n.size() : 1, ' ');
        for (double v : m[r]) out << fmt(v, "%8.3f");
        out << '\n';
    }
}

Split split_flag(const std::string& name) {
    try {
        return parse_split(name);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("bad number '" + item + "' in list");
        }
    }
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if constexpr (std::is_same_v<T, std::string>) {
            out.push_back(item);
        } else {
            try {
                std::size_t used = 0;
                out.push_back(static_cast<T>(std::stoull(item, &used)));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw UsageError("bad integer '" + item + "' in list");
            }
        }
    }
    return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Causal attention learning for graph classification"};
    app.name("cal");
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Write a biased synthetic motif dataset");
    SynSpec spec;
    std::string gen_out;
    gen->add_option("--bias", spec.bias, "Tree share of House graphs in train and val")->capture_default_str();
    gen->add_option("--n-per-class", spec.n_per_class)->capture_default_str();
    gen->add_option("--trivial-size", spec.trivial_size)->capture_default_str();
    gen->add_option("--seed", spec.seed)->capture_default_str();
    gen->add_option("--out", gen_out)->required();

    // train
    auto* train = app.add_subcommand("train", "Train one model and save its run record and checkpoint");
    TrainFlags train_flags;
    std::string train_data, train_out;
    train->add_option("--data", train_data)->required();
    train->add_option("--out", train_out, "Run directory")->required();
    train_flags.attach(train);

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a trained run on a dataset split");
    std::string eval_run, eval_data, eval_split = "test", eval_out;
    eval->add_option("--run", eval_run)->required();
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--split", eval_split)->capture_default_str();
    eval->add_option("--out", eval_out);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Bias sweep over seeds and variants");
    TrainFlags sweep_flags;
    std::string sweep_biases = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", sweep_seeds = "1,2,3",
                sweep_variants = "cal,vanilla", sweep_out;
    SynSpec sweep_spec;
    sweep->add_option("--biases", sweep_biases)->capture_default_str();
    sweep->add_option("--seeds", sweep_seeds)->capture_default_str();
    sweep->add_option("--variants", sweep_variants)->capture_default_str();
    sweep->add_option("--n-per-class", sweep_spec.n_per_class)->capture_default_str();
    sweep->add_option("--trivial-size", sweep_spec.trivial_size)->capture_default_str();
    sweep->add_option("--out", sweep_out)->required();
    sweep_flags.attach(sweep);

    // confusion
    auto* conf = app.add_subcommand("confusion", "Misclassification tables split by trivial subgraph kind");
    std::string conf_run, conf_data, conf_split = "test", conf_out;
    conf->add_option("--run", conf_run)->required();
    conf->add_option("--data", conf_data)->required();
    conf->add_option("--split", conf_split)->capture_default_str();
    conf->add_option("--out", conf_out);

    // export-attn
    auto* exp = app.add_subcommand("export-attn", "Write a graph's causal attention as Graphviz DOT");
    std::string exp_run, exp_data, exp_out;
    long long exp_graph = -1;
    exp->add_option("--run", exp_run)->required();
    exp->add_option("--data", exp_data)->required();
    exp->add_option("--graph", exp_graph)->required();
    exp->add_option("--out", exp_out)->required();

    // crossval
    auto* cv = app.add_subcommand("crossval", "Stratified k-fold cross-validation");
    TrainFlags cv_flags;
    std::string cv_tu, cv_data, cv_out;
    std::size_t cv_folds = 10;
    cv->add_option("--tu", cv_tu, "TUDataset directory");
    cv->add_option("--data", cv_data, "Dataset file");
    cv->add_option("--folds", cv_folds)->capture_default_str();
    cv->add_option("--out", cv_out)->required();
    cv_flags.attach(cv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            const Dataset d = make_synthetic(spec);
            const fs::path path = resolve_output(gen_out);
            save_dataset(d, path);
            out << "wrote " << path.string() << ": " << d.size() << " graphs\n";
            out << "realized bias (train+val): " << fmt(compute_bias(d, {Split::Train, Split::Val}), "%.6f") << '\n';
            out << "test Tree share: " << fmt([&] {
                std::size_t tree = 0, n = 0;
                for (std::size_t i : d.indices(Split::Test)) {
                    ++n;
                    tree += d.graphs[i].trivial_kind == TrivialKind::Tree;
                }
                return n ? static_cast<double>(tree) / static_cast<double>(n) : 0.0;
            }(), "%.6f") << '\n';
            for (std::size_t k = 0; k < d.num_classes; ++k) {
                std::size_t count = 0;
                for (const auto& g : d.graphs) count += g.label == static_cast<int>(k);
                out << "class " << to_string(kCausalKinds[k]) << ": " << count << '\n';
            }
        } else if (*train) {
            auto [config, text] = train_flags.build(train);
            const Dataset d = load_dataset(train_data);
            CalModel model(model_config(config, d));
            RunRecord rec = fit(model, d, config, [&](const EpochRecord& e) {
                out << "epoch " << e.epoch << " sup " << fmt(e.loss.sup);
                if (config.cal_enabled) out << " unif " << fmt(e.loss.unif) << " caus " << fmt(e.loss.caus);
                if (e.val_accuracy) out << " val " << fmt(*e.val_accuracy);
                out << " (" << fmt(e.seconds, "%.1f") << "s)\n";
                out.flush();
            });
            rec.config_text = text;
            const fs::path dir = resolve_output(train_out);
            write_text(dir / "run.json", dump(to_json(rec, d)));
            save_checkpoint(dir / "model.ckpt", model.parameters());
            std::ostringstream csv;
            csv << "epoch,loss_sup" << (config.cal_enabled ? ",loss_unif,loss_caus,loss_total" : "") << ",val_accuracy\n";
            for (const auto& e : rec.epochs) {
                csv << e.epoch << ',' << fmt(e.loss.sup, "%.17g");
                if (config.cal_enabled)
                    csv << ',' << fmt(e.loss.unif, "%.17g") << ',' << fmt(e.loss.caus, "%.17g") << ','
                        << fmt(e.loss.total, "%.17g");
                csv << ',' << (e.val_accuracy ? fmt(*e.val_accuracy, "%.17g") : "") << '\n';
            }
            write_text(dir / "epochs.csv", csv.str());
            out << "best epoch " << rec.best_epoch << ": test " << fmt(rec.test_accuracy_best) << " (last epoch "
                << fmt(rec.test_accuracy_last) << ")\n";
        } else if (*eval) {
            const Dataset d = load_dataset(eval_data);
            const LoadedRun run = load_run(eval_run, d);
            const Evaluation ev = evaluate(run.model, d, split_flag(eval_split));
            const json j{{"split", eval_split}, {"accuracy", ev.accuracy}, {"confusion", ev.confusion},
                         {"predictions", ev.predictions}, {"indices", ev.indices}};
            if (!eval_out.empty()) write_text(resolve_output(eval_out), dump(j));
            out << eval_split << " accuracy " << fmt(ev.accuracy) << " over " << ev.indices.size() << " graphs\n";
        } else if (*sweep) {
            auto [config, text] = sweep_flags.build(sweep);
            const auto biases = parse_double_list(sweep_biases);
            const auto seeds = parse_list<std::uint64_t>(sweep_seeds);
            const auto variants = parse_list<std::string>(sweep_variants);
            for (const auto& v : variants) apply_variant(config, v);  // reject unknown names up front
            std::map<std::pair<double, std::uint64_t>, Dataset> data;
            const SweepResult r = run_sweep(biases, seeds, variants, [&](double b, std::uint64_t s, const std::string& v) {
                auto key = std::make_pair(b, s);
                if (!data.count(key)) {
                    SynSpec sp = sweep_spec;
                    sp.bias = b;
                    sp.seed = s;
                    data.emplace(key, make_synthetic(sp));
                }
                const Dataset& d = data.at(key);
                TrainConfig c = config;
                c.seed = s;
                apply_variant(c, v);
                CalModel model(model_config(c, d));
                const RunRecord rec = fit(model, d, c);
                out << "bias " << b << " seed " << s << ' ' << v << ": test " << fmt(rec.test_accuracy_best) << '\n';
                out.flush();
                return rec.test_accuracy_best;
            });
            const fs::path dir = resolve_output(sweep_out);
            json j = to_json(r);
            j["config"] = to_json(config);
            j["config_text"] = text;
            write_text(dir / "sweep.json", dump(j));
            write_text(dir / "sweep.csv", sweep_csv(r));
            out << sweep_csv(r);
        } else if (*conf) {
            const Dataset d = load_dataset(conf_data);
            const LoadedRun run = load_run(conf_run, d);
            const Evaluation ev = evaluate(run.model, d, split_flag(conf_split));
            const auto split = confusion_by_context(d, ev);
            if (!conf_out.empty()) write_text(resolve_output(conf_out), dump(to_json(split)));
            for (const auto& ctx : split) {
                out << to_string(ctx.context) << " context: " << ctx.misclassified << " misclassified\n";
                if (ctx.empty()) {
                    out << "  EMPTY\n";
                    continue;
                }
                print_matrix(out, ctx.normalized);
                const auto modal = ctx.modal_wrong_class();
                out << "  modal wrong class: " << to_string(kCausalKinds[*modal]) << '\n';
            }
        } else if (*exp) {
            const Dataset d = load_dataset(exp_data);
            if (exp_graph < 0 || static_cast<std::size_t>(exp_graph) >= d.size())
                throw IoError("graph id " + std::to_string(exp_graph) + " not in dataset of " +
                              std::to_string(d.size()) + " graphs");
            const LoadedRun run = load_run(exp_run, d);
            const Graph& g = d.graphs[static_cast<std::size_t>(exp_graph)];
            const AttentionRecord rec = export_attention(run.model, g);
            fs::path dot = resolve_output(exp_out);
            write_text(dot, attention_dot(g, rec, "graph" + std::to_string(exp_graph)));
            fs::path record = dot;
            record.replace_extension(".json");
            json j = to_json(rec);
            j["graph"] = exp_graph;
            j["label"] = g.label;
            if (g.causal_nodes) j["causal_nodes"] = *g.causal_nodes;
            write_text(record, dump(j));
            out << "wrote " << dot.string() << " and " << record.string() << '\n';
        } else if (*cv) {
            DatasetSource source;
            if (!cv_tu.empty()) source.tudataset = cv_tu;
            if (!cv_data.empty()) source.file = cv_data;
            source.validate();
            auto [config, text] = cv_flags.build(cv);
            const Dataset d = source.load();
            const CrossvalResult r = crossval(d, config, cv_folds, [&](std::size_t k, const RunRecord& rec) {
                out << "fold " << k << ": test " << fmt(rec.test_accuracy_best) << '\n';
                out.flush();
            });
            json j = to_json(r, d);
            j["config"] = to_json(config);
            j["config_text"] = text;
            const fs::path dir = resolve_output(cv_out);
            write_text(dir / "crossval.json", dump(j));
            std::ostringstream csv;
            csv << "fold,accuracy\n";
            for (std::size_t k = 0; k < r.accuracies.size(); ++k) csv << k << ',' << fmt(r.accuracies[k], "%.17g") << '\n';
            write_text(dir / "folds.csv", csv.str());
            out << "mean " << fmt(100 * r.mean, "%.2f") << " +- " << fmt(100 * r.stddev, "%.2f") << '\n';
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace cal
