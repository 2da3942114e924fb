#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cal/checkpoint.hpp"
#include "cal/cli.hpp"
#include "cal/dataset_io.hpp"
#include "cal/errors.hpp"
#include "cal/harness.hpp"

namespace cal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Recursive-descent check against the Graphviz DOT grammar (graph, stmt_list,
// node/edge/attr statements, attribute lists, IDs as names, numerals or quoted strings).
class DotChecker {
public:
    explicit DotChecker(std::string text) : s_(std::move(text)) {}

    bool valid() {
        try {
            graph();
            skip();
            return pos_ == s_.size();
        } catch (const std::runtime_error&) {
            return false;
        }
    }

private:
    std::string s_;
    std::size_t pos_ = 0;
    bool directed_ = false;

    [[noreturn]] void fail() { throw std::runtime_error("dot syntax"); }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool peek(const std::string& tok) {
        skip();
        return s_.compare(pos_, tok.size(), tok) == 0;
    }
    void expect(const std::string& tok) {
        if (!peek(tok)) fail();
        pos_ += tok.size();
    }
    bool id() {
        skip();
        if (pos_ >= s_.size()) return false;
        const char c = s_[pos_];
        if (c == '"') {
            for (++pos_; pos_ < s_.size() && s_[pos_] != '"'; ++pos_)
                if (s_[pos_] == '\\') ++pos_;
            if (pos_ >= s_.size()) fail();
            ++pos_;
            return true;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            return true;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.') {
            if (c == '-' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '>') return false;
            std::size_t start = pos_;
            if (c == '-') ++pos_;
            bool dot = false, digits = false;
            while (pos_ < s_.size()) {
                if (std::isdigit(static_cast<unsigned char>(s_[pos_]))) digits = true;
                else if (s_[pos_] == '.' && !dot) dot = true;
                else break;
                ++pos_;
            }
            if (!digits) {
                pos_ = start;
                return false;
            }
            return true;
        }
        return false;
    }
    void graph() {
        if (peek("strict")) expect("strict");
        if (peek("digraph")) {
            expect("digraph");
            directed_ = true;
        } else {
            expect("graph");
        }
        id();
        expect("{");
        while (!peek("}")) {
            stmt();
            if (peek(";")) expect(";");
        }
        expect("}");
    }
    void attr_list() {
        while (peek("[")) {
            expect("[");
            while (!peek("]")) {
                if (!id()) fail();
                expect("=");
                if (!id()) fail();
                if (peek(",")) expect(",");
                else if (peek(";")) expect(";");
            }
            expect("]");
        }
    }
    void stmt() {
        if (peek("node") || peek("edge") || (peek("graph") && !directed_)) {
            id();
            attr_list();
            return;
        }
        if (!id()) fail();
        if (peek("=")) {
            expect("=");
            if (!id()) fail();
            return;
        }
        bool edge = false;
        while (peek(directed_ ? "->" : "--")) {
            expect(directed_ ? "->" : "--");
            if (!id()) fail();
            edge = true;
        }
        if (!edge && peek(directed_ ? "--" : "->")) fail();
        attr_list();
    }
};

TEST(DotChecker, AcceptsAndRejects) {
    EXPECT_TRUE(DotChecker("digraph G { a -> b [penwidth=2.5]; 0 [fillcolor=\"#ffffff\"]; }").valid());
    EXPECT_FALSE(DotChecker("digraph G { a -- b; }").valid());
    EXPECT_FALSE(DotChecker("digraph G { a -> ; }").valid());
    EXPECT_FALSE(DotChecker("digraph G { a [x=1 }").valid());
    EXPECT_FALSE(DotChecker("digraph G { a -> b").valid());
}

TEST(Config, ParsesKeyValueLinesAndKeepsText) {
    const std::string text = "# comment\n\nlambda1 = 0.3\n  batch_size=64  \nshuffle = ordered\n";
    const ConfigFile cfg = parse_config(text);
    EXPECT_EQ(cfg.text, text);
    ASSERT_EQ(cfg.entries.size(), 3u);
    TrainConfig c;
    apply_config(c, cfg);
    EXPECT_EQ(c.lambda1, 0.3);
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.shuffle_mode, ShuffleMode::Ordered);
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config("lambda1 0.3\n"), UsageError);
    TrainConfig c;
    EXPECT_THROW(apply_config(c, parse_config("colour = red\n")), UsageError);
    EXPECT_THROW(apply_config(c, parse_config("epochs = ten\n")), UsageError);
    EXPECT_THROW(apply_config(c, parse_config("cal = maybe\n")), UsageError);
    EXPECT_THROW(read_config_file("/nonexistent/cal.cfg"), IoError);
}

TEST(Config, TrainConfigJsonRoundTrip) {
    TrainConfig c;
    c.lambda1 = 0.1;
    c.lambda2 = 0.9;
    c.learning_rate = 3e-3;
    c.seed = 42;
    c.backbone = Backbone::GIN;
    c.cal_enabled = false;
    c.shuffle_mode = ShuffleMode::Ordered;
    c.head_input = HeadInput::Features;
    c.symmetric_edge_attention = true;
    const TrainConfig back = train_config_from_json(json::parse(to_json(c).dump()));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_THROW(train_config_from_json(json{{"lambda1", 1}}), FormatError);
}

TEST(OutputRoot, RelativePathsGoUnderTheRoot) {
    ::setenv("CAL_OUTPUT_ROOT", "/tmp/calroot", 1);
    EXPECT_EQ(resolve_output("runs/a"), fs::path("/tmp/calroot/runs/a"));
    EXPECT_EQ(resolve_output("/abs/b"), fs::path("/abs/b"));
    ::unsetenv("CAL_OUTPUT_ROOT");
    EXPECT_EQ(resolve_output("runs/a"), fs::path("runs/a"));
}

TEST(DatasetSource, ExactlyOne) {
    DatasetSource none;
    EXPECT_THROW(none.validate(), UsageError);
    DatasetSource two;
    two.synthetic = SynSpec{};
    two.file = "x";
    EXPECT_THROW(two.validate(), UsageError);
    DatasetSource one;
    one.synthetic = SynSpec{.n_per_class = 2, .trivial_size = 10};
    EXPECT_EQ(one.load().size(), 8u);
}

SweepResult fixed_sweep(const std::map<std::pair<std::string, double>, std::vector<double>>& table) {
    SweepResult r;
    for (const auto& [key, accs] : table) {
        if (std::find(r.variants.begin(), r.variants.end(), key.first) == r.variants.end())
            r.variants.push_back(key.first);
        if (std::find(r.biases.begin(), r.biases.end(), key.second) == r.biases.end()) r.biases.push_back(key.second);
        for (std::size_t s = 0; s < accs.size(); ++s) r.cells.push_back({key.second, s + 1, key.first, accs[s]});
    }
    r.seeds = {1, 2, 3};
    return r;
}

TEST(Sweep, GinNinePointFiveDiscount) {
    const SweepResult r = fixed_sweep({{{"gin", 0.1}, {0.8750}}, {{"gin", 0.5}, {0.9674}}});
    const double d = r.discount("gin", 0.1);
    EXPECT_NEAR(d, 0.9045, 1e-4);
    EXPECT_NEAR(100 * (1 - d), 9.55, 0.01);
    EXPECT_EQ(r.discount("gin", 0.5), 1.0);
}

TEST(Sweep, IdenticalAccuraciesGiveUnitDiscounts) {
    const SweepResult r = fixed_sweep({{{"cal", 0.1}, {0.8, 0.8, 0.8}},
                                       {{"cal", 0.5}, {0.8, 0.8, 0.8}},
                                       {{"cal", 0.9}, {0.8, 0.8, 0.8}}});
    for (double b : {0.1, 0.5, 0.9}) EXPECT_EQ(r.discount("cal", b), 1.0);
}

TEST(Sweep, MedianOverSeeds) {
    const SweepResult r = fixed_sweep({{{"cal", 0.5}, {0.9, 0.7, 0.8}}, {{"cal", 0.9}, {0.4, 0.6, 0.5}}});
    EXPECT_EQ(r.accuracy("cal", 0.5), 0.8);
    EXPECT_EQ(r.accuracy("cal", 0.9), 0.5);
    EXPECT_EQ(median({1.0, 3.0}), 2.0);
    EXPECT_THROW(median({}), ContractError);
}

TEST(Sweep, FileDiscountsRecomputeExactly) {
    const SweepResult r = fixed_sweep({{{"cal", 0.5}, {0.91, 0.93, 0.92}},
                                       {{"cal", 0.9}, {0.87, 0.89, 0.81}},
                                       {{"vanilla", 0.5}, {0.9, 0.88, 0.89}},
                                       {{"vanilla", 0.9}, {0.8, 0.83, 0.79}}});
    const json j = json::parse(dump(to_json(r)));
    for (const auto& row : j.at("summary")) {
        const std::string v = row.at("variant");
        const double b = row.at("bias");
        std::vector<double> at_b, at_half;
        for (const auto& c : j.at("cells")) {
            if (c.at("variant") != v) continue;
            if (c.at("bias") == b) at_b.push_back(c.at("accuracy"));
            if (c.at("bias") == 0.5) at_half.push_back(c.at("accuracy"));
        }
        EXPECT_EQ(row.at("median_accuracy").get<double>(), median(at_b));
        EXPECT_EQ(row.at("discount").get<double>(), median(at_b) / median(at_half));
    }
    const std::string csv = sweep_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,bias,accuracy_seed1,accuracy_seed2,accuracy_seed3,median,discount");
}

TEST(Sweep, RunsEveryCellOnceAndNeedsTheUnbiasedLevel) {
    int calls = 0;
    const SweepResult r = run_sweep({0.1, 0.9}, {1, 2}, {"cal", "vanilla"},
                                    [&](double b, std::uint64_t s, const std::string&) {
                                        ++calls;
                                        return b + 0.01 * static_cast<double>(s);
                                    });
    EXPECT_EQ(calls, 8);
    EXPECT_EQ(r.cells.size(), 8u);
    EXPECT_THROW(r.discount("cal", 0.9), ContractError);
    EXPECT_THROW(run_sweep({}, {1}, {"cal"}, [](double, std::uint64_t, const std::string&) { return 0.0; }),
                 UsageError);
    TrainConfig c;
    EXPECT_THROW(apply_variant(c, "bogus"), UsageError);
    apply_variant(c, "ordered");
    EXPECT_TRUE(c.cal_enabled);
    EXPECT_EQ(c.shuffle_mode, ShuffleMode::Ordered);
    apply_variant(c, "vanilla");
    EXPECT_FALSE(c.cal_enabled);
}

Dataset context_dataset() {
    Dataset d;
    d.num_classes = 4;
    d.feature_dim = 1;
    for (int label = 0; label < 4; ++label)
        for (TrivialKind t : kTrivialKinds) {
            Graph g;
            g.n = 1;
            g.feature_dim = 1;
            g.feature_index = {0};
            g.label = label;
            g.causal_kind = kCausalKinds[label];
            g.trivial_kind = t;
            d.graphs.push_back(g);
            d.split.push_back(Split::Test);
        }
    return d;
}

Evaluation predictions_of(const Dataset& d, std::vector<std::size_t> preds) {
    Evaluation ev;
    for (std::size_t i = 0; i < d.size(); ++i) ev.indices.push_back(i);
    ev.predictions = std::move(preds);
    return ev;
}

TEST(Confusion, PerfectClassifierIsEmpty) {
    const Dataset d = context_dataset();
    const auto c = confusion_by_context(d, predictions_of(d, {0, 0, 1, 1, 2, 2, 3, 3}));
    EXPECT_TRUE(c[0].empty());
    EXPECT_TRUE(c[1].empty());
    const json j = to_json(c);
    EXPECT_EQ(j.at("Tree").at("matrix"), "EMPTY");
    EXPECT_FALSE(c[1].modal_wrong_class());
}

TEST(Confusion, SingleTreeCycleMistakenForHouse) {
    const Dataset d = context_dataset();
    // graph 3 is the Tree-context Cycle
    const auto c = confusion_by_context(d, predictions_of(d, {0, 0, 1, 0, 2, 2, 3, 3}));
    EXPECT_TRUE(c[0].empty());
    EXPECT_EQ(c[1].context, TrivialKind::Tree);
    EXPECT_EQ(c[1].misclassified, 1u);
    EXPECT_EQ(c[1].normalized[1], (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
    EXPECT_EQ(c[1].modal_wrong_class(), 0u);
}

TEST(Confusion, RowsSumToOneAndModalExcludesTruth) {
    const Dataset d = context_dataset();
    // Tree: House->Cycle, Cycle->House, Grid->House, Diamond->Grid; BA: House->Grid
    const auto c = confusion_by_context(d, predictions_of(d, {2, 1, 1, 0, 2, 0, 3, 2}));
    for (const auto& ctx : c)
        for (std::size_t r = 0; r < 4; ++r) {
            const double sum = std::accumulate(ctx.normalized[r].begin(), ctx.normalized[r].end(), 0.0);
            const auto misses = std::accumulate(ctx.counts[r].begin(), ctx.counts[r].end(), std::size_t{0});
            EXPECT_EQ(sum, misses ? 1.0 : 0.0);
        }
    EXPECT_EQ(c[1].modal_wrong_class(), 0u);
    EXPECT_EQ(c[1].modal_wrong_class(0u), 0u);
    EXPECT_EQ(c[0].modal_wrong_class(), 2u);
    EXPECT_FALSE(c[0].modal_wrong_class(0u));
}

TEST(AttentionExport, LinearMaps) {
    EXPECT_EQ(gray_intensity(1.0), 255);
    EXPECT_EQ(gray_intensity(0.0), 0);
    EXPECT_EQ(gray_intensity(0.5), 128);
    EXPECT_EQ(pen_width(0.5), 2.25);
    EXPECT_EQ(pen_width(0.0), 0.5);
    EXPECT_EQ(pen_width(1.0), 4.0);
    EXPECT_THROW(gray_intensity(1.5), ContractError);
}

TEST(AttentionExport, DotIsValidAndRecordIsRaw) {
    SynSpec s;
    s.n_per_class = 1;
    s.trivial_size = 12;
    const Dataset d = make_synthetic(s);
    TrainConfig c;
    c.hidden = 8;
    const CalModel model(model_config(c, d));
    for (const auto& g : d.graphs) {
        const AttentionRecord rec = export_attention(model, g);
        const std::string dot = attention_dot(g, rec);
        EXPECT_TRUE(DotChecker(dot).valid()) << dot;
        const json j = json::parse(to_json(rec).dump());
        for (std::size_t i = 0; i < g.n; ++i) EXPECT_EQ(j.at("alpha_c")[i].get<double>(), rec.node_causal[i]);
        for (std::size_t e = 0; e < rec.edges.size(); ++e)
            EXPECT_EQ(j.at("edges")[e].at("beta_c").get<double>(), std::get<2>(rec.edges[e]));
    }
}

TEST(AttentionExport, ExtremeScoresMapToRampEnds) {
    Graph g;
    g.n = 2;
    g.edges = {{0, 1}};
    AttentionRecord rec{{1.0, 0.0}, {{0, 1, 1.0}, {1, 0, 0.5}}};
    const std::string dot = attention_dot(g, rec);
    EXPECT_NE(dot.find("0 [fillcolor=\"#000000\""), std::string::npos);
    EXPECT_NE(dot.find("1 [fillcolor=\"#ffffff\""), std::string::npos);
    EXPECT_NE(dot.find("0 -> 1 [penwidth=4.0000"), std::string::npos);
    EXPECT_NE(dot.find("1 -> 0 [penwidth=2.2500"), std::string::npos);
    EXPECT_TRUE(DotChecker(dot).valid());
}

const Dataset& mutag() {
    static const Dataset d = load_tudataset(fs::path(CAL_DATA_DIR) / "MUTAG");
    return d;
}

TEST(Folds, MutagSizesAndStratification) {
    const auto folds = stratified_folds(mutag(), 10, 5);
    std::vector<std::size_t> size(10, 0), positive(10, 0);
    for (std::size_t i = 0; i < folds.size(); ++i) {
        ++size[folds[i]];
        positive[folds[i]] += mutag().graphs[i].label == 1;
    }
    for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_TRUE(size[k] == 18 || size[k] == 19) << size[k];
        EXPECT_LE(*std::max_element(positive.begin(), positive.end()) - *std::min_element(positive.begin(), positive.end()),
                  1u);
    }
    EXPECT_EQ(stratified_folds(mutag(), 10, 5), folds);
    EXPECT_NE(stratified_folds(mutag(), 10, 6), folds);
}

TEST(Folds, SplitRolesAndErrors) {
    const auto folds = stratified_folds(mutag(), 10, 1);
    const Dataset d = with_fold_split(mutag(), folds, 0, 10);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Split expected = folds[i] == 0 ? Split::Test : folds[i] == 9 ? Split::Val : Split::Train;
        EXPECT_EQ(d.split[i], expected);
    }
    Dataset small = mutag();
    small.graphs.resize(9);
    small.split.resize(9);
    EXPECT_THROW(stratified_folds(small, 10, 1), UsageError);
}

TEST(Crossval, AggregatesFoldAccuracies) {
    SynSpec s;
    s.n_per_class = 3;
    s.trivial_size = 8;
    const Dataset d = make_synthetic(s);
    TrainConfig c;
    c.hidden = 4;
    c.epochs = 1;
    std::size_t calls = 0;
    const CrossvalResult r = crossval(d, c, 4, [&](std::size_t k, const RunRecord&) { EXPECT_EQ(k, calls++); });
    ASSERT_EQ(r.accuracies.size(), 4u);
    const double mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / 4;
    double ss = 0;
    for (double a : r.accuracies) ss += (a - mean) * (a - mean);
    EXPECT_DOUBLE_EQ(r.mean, mean);
    EXPECT_DOUBLE_EQ(r.stddev, std::sqrt(ss / 4));
}

// ---- command line

class Cli : public ::testing::Test {
protected:
    fs::path dir;
    std::ostringstream out, err;

    void SetUp() override {
        dir = fs::temp_directory_path() / ("cal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        ::setenv("CAL_OUTPUT_ROOT", dir.c_str(), 1);
    }
    void TearDown() override {
        ::unsetenv("CAL_OUTPUT_ROOT");
        fs::remove_all(dir);
    }

    int run(std::vector<std::string> args) {
        args.insert(args.begin(), "cal");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        out.str("");
        err.str("");
        return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }

    std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    std::string data() const { return (dir / "syn.txt").string(); }

    void generate() {
        ASSERT_EQ(run({"generate", "--bias", "0.9", "--n-per-class", "10", "--trivial-size", "12", "--seed", "7",
                       "--out", "syn.txt"}),
                  0)
            << err.str();
    }

    std::vector<std::string> tiny_train(const std::string& out_dir) const {
        return {"train", "--data", data(), "--out", out_dir, "--epochs", "2", "--hidden", "8", "--batch-size", "16"};
    }
};

TEST_F(Cli, GenerateReportsBiasAndIsDeterministic) {
    generate();
    EXPECT_NE(out.str().find("realized bias (train+val): 0.875000"), std::string::npos) << out.str();
    EXPECT_NE(out.str().find("class House: 10"), std::string::npos);
    const Dataset d = load_dataset(dir / "syn.txt");
    EXPECT_EQ(d.size(), 40u);
    const std::string first = slurp(dir / "syn.txt");
    generate();
    EXPECT_EQ(slurp(dir / "syn.txt"), first);
}

TEST_F(Cli, GenerateExactBias) {
    ASSERT_EQ(run({"generate", "--bias", "0.9", "--seed", "7", "--n-per-class", "100", "--trivial-size", "8",
                   "--out", "syn09"}),
              0);
    EXPECT_EQ(compute_bias(load_dataset(dir / "syn09"), {Split::Train}), 0.9);
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({"generate", "--bias", "1.5", "--out", "x"}), 2);
    EXPECT_EQ(run({"generate", "--bias", "-0.1", "--out", "x"}), 2);
    EXPECT_EQ(run({}), 2);
    EXPECT_EQ(run({"frobnicate"}), 2);
    EXPECT_EQ(run({"train", "--data", "x"}), 2);
    generate();
    EXPECT_EQ(run({"train", "--data", data(), "--out", "r", "--epochs", "0"}), 2);
    EXPECT_EQ(run({"train", "--data", data(), "--out", "r", "--backbone", "gat"}), 2);
    EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(Cli, MissingInputsExitOne) {
    EXPECT_EQ(run({"train", "--data", (dir / "missing.txt").string(), "--out", "r"}), 1);
    EXPECT_EQ(run({"crossval", "--tu", (dir / "nothing").string(), "--out", "cv"}), 1);
}

TEST_F(Cli, TrainWritesDeterministicRecordAndCheckpoint) {
    generate();
    ASSERT_EQ(run(tiny_train("a")), 0) << err.str();
    ASSERT_EQ(run(tiny_train("b")), 0) << err.str();
    for (const char* f : {"run.json", "model.ckpt", "epochs.csv"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    const json j = json::parse(slurp(dir / "a" / "run.json"));
    ASSERT_EQ(j.at("epochs").size(), 2u);
    for (const auto& e : j.at("epochs")) {
        EXPECT_TRUE(e.contains("loss_unif"));
        EXPECT_TRUE(e.contains("loss_caus"));
    }
    EXPECT_TRUE(j.contains("test_accuracy_best"));
    EXPECT_TRUE(j.contains("test_accuracy_last"));
}

TEST_F(Cli, VanillaRecordHoldsOnlySupervisedLoss) {
    generate();
    auto args = tiny_train("v");
    args.insert(args.end(), {"--cal", "off"});
    ASSERT_EQ(run(args), 0) << err.str();
    const json j = json::parse(slurp(dir / "v" / "run.json"));
    for (const auto& e : j.at("epochs")) {
        EXPECT_TRUE(e.contains("loss_sup"));
        EXPECT_FALSE(e.contains("loss_unif"));
        EXPECT_FALSE(e.contains("loss_caus"));
        EXPECT_FALSE(e.contains("loss_total"));
    }
}

TEST_F(Cli, ConfigFileOverridesFlagsAndIsEchoed) {
    generate();
    const std::string cfg = "# tuned\nlambda1 = 0.25\nepochs = 1\n";
    {
        std::ofstream f(dir / "run.cfg");
        f << cfg;
    }
    auto args = tiny_train("c");
    args.insert(args.end(), {"--config", (dir / "run.cfg").string()});
    ASSERT_EQ(run(args), 0) << err.str();
    const json j = json::parse(slurp(dir / "c" / "run.json"));
    EXPECT_EQ(j.at("config_text"), cfg);
    EXPECT_EQ(j.at("config").at("lambda1"), 0.25);
    EXPECT_EQ(j.at("epochs").size(), 1u);
}

TEST_F(Cli, EvalConfusionAndExportUseTheSavedRun) {
    generate();
    ASSERT_EQ(run(tiny_train("r")), 0) << err.str();
    const std::string run_dir = (dir / "r").string();
    ASSERT_EQ(run({"eval", "--run", run_dir, "--data", data(), "--out", "eval.json"}), 0) << err.str();
    const json ev = json::parse(slurp(dir / "eval.json"));
    const json rec = json::parse(slurp(dir / "r" / "run.json"));
    EXPECT_EQ(ev.at("accuracy"), rec.at("test_accuracy_best"));

    ASSERT_EQ(run({"confusion", "--run", run_dir, "--data", data(), "--out", "conf.json"}), 0) << err.str();
    const json conf = json::parse(slurp(dir / "conf.json"));
    EXPECT_TRUE(conf.contains("BA"));
    EXPECT_TRUE(conf.contains("Tree"));

    ASSERT_EQ(run({"export-attn", "--run", run_dir, "--data", data(), "--graph", "5", "--out", "g5.dot"}), 0)
        << err.str();
    EXPECT_TRUE(DotChecker(slurp(dir / "g5.dot")).valid());
    const json attn = json::parse(slurp(dir / "g5.json"));
    const Dataset d = load_dataset(data());
    CalModel model(model_config(train_config_from_json(rec.at("config")), d));
    load_checkpoint(dir / "r" / "model.ckpt", model.parameters());
    const AttentionRecord expected = export_attention(model, d.graphs[5]);
    for (std::size_t i = 0; i < expected.node_causal.size(); ++i)
        EXPECT_EQ(attn.at("alpha_c")[i].get<double>(), expected.node_causal[i]);

    EXPECT_EQ(run({"export-attn", "--run", run_dir, "--data", data(), "--graph", "400", "--out", "g.dot"}), 1);
    EXPECT_EQ(run({"eval", "--run", (dir / "nope").string(), "--data", data()}), 1);
    EXPECT_EQ(run({"eval", "--run", run_dir, "--data", data(), "--split", "holdout"}), 2);
}

TEST_F(Cli, SweepWritesConsistentTables) {
    ASSERT_EQ(run({"sweep", "--biases", "0.5,0.9", "--seeds", "1", "--variants", "cal,vanilla", "--n-per-class", "4",
                   "--trivial-size", "8", "--epochs", "1", "--hidden", "4", "--out", "sw"}),
              0)
        << err.str();
    const json j = json::parse(slurp(dir / "sw" / "sweep.json"));
    EXPECT_EQ(j.at("cells").size(), 4u);
    for (const auto& row : j.at("summary"))
        if (row.at("bias") == 0.5) EXPECT_EQ(row.at("discount"), 1.0);
    const std::string csv = slurp(dir / "sw" / "sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv.rfind("variant,bias,accuracy_seed1,median,discount\n", 0), 0u);
    EXPECT_EQ(run({"sweep", "--variants", "cal,bogus", "--out", "x"}), 2);
}

TEST_F(Cli, CrossvalFoldCountChecks) {
    ASSERT_EQ(run({"generate", "--n-per-class", "2", "--trivial-size", "8", "--out", "tiny.txt"}), 0);
    EXPECT_EQ(run({"crossval", "--data", (dir / "tiny.txt").string(), "--folds", "10", "--out", "cv"}), 2);
    EXPECT_EQ(run({"crossval", "--data", (dir / "tiny.txt").string(), "--tu", "x", "--out", "cv"}), 2);
    ASSERT_EQ(run({"crossval", "--data", (dir / "tiny.txt").string(), "--folds", "4", "--epochs", "1", "--hidden",
                   "4", "--out", "cv"}),
              0)
        << err.str();
    const json j = json::parse(slurp(dir / "cv" / "crossval.json"));
    EXPECT_EQ(j.at("folds").size(), 4u);
    EXPECT_EQ(j.at("accuracies").size(), 4u);
}

}  // namespace
}  // namespace cal
