#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cal/synthetic.hpp"
#include "cal/train.hpp"

namespace cal {

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// skipped. `text` keeps the file verbatim.
struct ConfigFile {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string text;
};

ConfigFile parse_config(const std::string& text);
ConfigFile read_config_file(const std::filesystem::path& path);

/// Sets one TrainConfig field from its flag name (e.g. "lambda1", "batch-size").
/// Unknown keys and unparsable values are UsageErrors.
void set_train_option(TrainConfig& config, const std::string& key, const std::string& value);
void apply_config(TrainConfig& config, const ConfigFile& file);

/// Directory named by CAL_OUTPUT_ROOT, or empty when unset.
std::filesystem::path output_root();
/// Relative paths are placed under output_root().
std::filesystem::path resolve_output(const std::filesystem::path& path);

/// Where a dataset comes from; exactly one source.
struct DatasetSource {
    std::optional<SynSpec> synthetic;
    std::optional<std::filesystem::path> tudataset;
    std::optional<std::filesystem::path> file;

    /// Throws UsageError unless exactly one source is set.
    void validate() const;
    Dataset load() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Wall-clock fields are left out so reruns produce identical files.
nlohmann::json to_json(const RunRecord& record, const Dataset& dataset);

/// Bytes of `j` as written to disk: two-space indent and a trailing newline.
std::string dump(const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

// ---- bias sweeps

/// Named training variants: "cal", "vanilla", "ordered" (CAL with the
/// identity pairing instead of a random shuffle).
void apply_variant(TrainConfig& config, const std::string& variant);

struct SweepCell {
    double bias = 0.0;
    std::uint64_t seed = 0;
    std::string variant;
    double accuracy = 0.0;
};

struct SweepResult {
    std::vector<double> biases;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> variants;
    std::vector<SweepCell> cells;

    /// Median test accuracy over seeds.
    double accuracy(const std::string& variant, double bias) const;
    /// accuracy(b) / accuracy(0.5). ContractError when 0.5 was not swept.
    double discount(const std::string& variant, double bias) const;
};

double median(std::vector<double> values);

nlohmann::json to_json(const SweepResult& result);
/// variant,bias,accuracy_seed<s>...,median,discount
std::string sweep_csv(const SweepResult& result);

using CellRunner = std::function<double(double bias, std::uint64_t seed, const std::string& variant)>;

/// Runs every (bias, seed, variant) cell through `run`.
SweepResult run_sweep(const std::vector<double>& biases, const std::vector<std::uint64_t>& seeds,
                      const std::vector<std::string>& variants, const CellRunner& run);

// ---- confusion by trivial context

struct ContextConfusion {
    TrivialKind context = TrivialKind::BA;
    std::size_t misclassified = 0;
    /// counts[truth][prediction] over misclassified graphs only.
    std::vector<std::vector<std::size_t>> counts;
    /// Rows with at least one miss divided by their total; other rows are zero.
    std::vector<std::vector<double>> normalized;

    bool empty() const noexcept { return misclassified == 0; }
    /// Most frequent wrong prediction, skipping graphs whose truth is
    /// `exclude_truth`; lowest class wins ties. Empty when nothing is left.
    std::optional<std::size_t> modal_wrong_class(std::optional<std::size_t> exclude_truth = std::nullopt) const;
};

/// Splits the misclassified graphs of `eval` by trivial kind (BA first, then
/// Tree). Graphs without a trivial kind are ignored.
std::array<ContextConfusion, 2> confusion_by_context(const Dataset& dataset, const Evaluation& eval);

nlohmann::json to_json(const std::array<ContextConfusion, 2>& confusion);

// ---- attention export

/// 0 for α = 0 up to 255 for α = 1.
int gray_intensity(double alpha);
/// 0.5 for β = 0 up to 4.0 for β = 1.
double pen_width(double beta);

/// Graphviz digraph. Node fill is darker for larger α_c; each directed edge
/// carries its own β_c as pen width.
std::string attention_dot(const Graph& graph, const AttentionRecord& record, const std::string& name = "G");
nlohmann::json to_json(const AttentionRecord& record);

// ---- cross-validation

/// Fold id per graph. Each class is shuffled with `seed` and the classes are
/// dealt round-robin, so fold sizes differ by at most one and labels are
/// spread evenly. UsageError when there are fewer graphs than folds.
std::vector<std::size_t> stratified_folds(const Dataset& dataset, std::size_t folds, std::uint64_t seed);

/// Test = fold k, val = fold k - 1 (mod folds), train = the rest.
Dataset with_fold_split(Dataset dataset, const std::vector<std::size_t>& fold_of, std::size_t k, std::size_t folds);

struct CrossvalResult {
    std::vector<RunRecord> folds;
    std::vector<double> accuracies;
    double mean = 0.0;
    /// Population standard deviation.
    double stddev = 0.0;
};

CrossvalResult crossval(const Dataset& dataset, const TrainConfig& config, std::size_t folds,
                        const std::function<void(std::size_t, const RunRecord&)>& on_fold = {});

nlohmann::json to_json(const CrossvalResult& result, const Dataset& dataset);

}  // namespace cal
