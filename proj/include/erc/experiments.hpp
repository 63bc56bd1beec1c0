#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"
#include "erc/evaluation.hpp"
#include "erc/prompting.hpp"
#include "erc/retrieval.hpp"

namespace erc {

/// Exact rational in (0, 1].
struct Proportion {
    std::uint64_t num = 1;
    std::uint64_t den = 1;

    static Proportion parse(std::string_view text);  // "1/64", "1"
    std::string str() const;
    /// ceil(num * count / den)
    std::size_t of(std::size_t count) const;
    bool operator==(const Proportion&) const = default;
};

/// The data-scale grid used in the cross-dataset study: 1/64 ... 1.
std::span<const Proportion> standard_proportions();

enum class RunMode { Single, Mix };
enum class Ablation { Full, NoExamples, NoTuning, ZeroShot };

std::string_view to_string(RunMode mode);
std::string_view to_string(Ablation ablation);
Ablation parse_ablation(std::string_view name);

struct DatasetSpec {
    std::string dataset_id;
    std::filesystem::path train;
    std::filesystem::path test;
    std::optional<std::filesystem::path> val;
    std::optional<std::filesystem::path> labels;  // label-space file; built-in space otherwise
    std::optional<std::filesystem::path> train_vectors;  // row i = i-th train utterance
    std::optional<std::filesystem::path> test_vectors;   // row i = i-th test utterance
};

struct ExperimentConfig {
    std::string name;
    std::vector<DatasetSpec> datasets;
    RunMode mode = RunMode::Single;
    Proportion proportion;
    std::optional<std::filesystem::path> mapping_path;
    Strategy strategy = Strategy::Dense;
    Bm25Params bm25;
    std::size_t k = 5;
    OrderingStrategy ordering;
    std::optional<std::size_t> budget;  // per-dataset defaults when unset
    double budget_safety_factor = 1.0;
    std::uint64_t seed = 0;
    Ablation ablation = Ablation::Full;
    std::filesystem::path output_dir;
    unsigned threads = 1;
};

/// Relative paths resolve against `base_dir`. A run manifest is accepted too:
/// its embedded "config" block is used.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Throws InvalidConfig on a violated invariant.
void validate_config(const ExperimentConfig& config);

/// Maximum prompt length per dataset: 2048 for iemocap, 1024 otherwise.
std::size_t default_budget(std::string_view dataset_id);

/// Picks ceil(p * D) whole dialogues uniformly without replacement; the kept
/// dialogues stay in their original order. p = 1 returns the corpus as is.
Corpus sample_proportion(const Corpus& corpus, Proportion p, std::uint64_t seed);

/// "<dataset_id>:<dialogue_id>" for every dialogue.
Corpus prefix_dialogue_ids(const Corpus& corpus, std::string_view prefix);

/// Samples each corpus at p (same seed for each source), maps labels into the
/// unified space, prefixes dialogue ids with the source dataset id and
/// concatenates. Result has dataset_id "mix".
Corpus mix_datasets(std::span<const Corpus> corpora, const LabelMapping& mapping, Proportion p, std::uint64_t seed);

struct StageRecord {
    std::string name;
    nlohmann::json counts;
};

struct RunManifest {
    std::string config_hash;
    nlohmann::json config;
    nlohmann::json inputs;     // resolved input paths
    nlohmann::json artifacts;  // relative path -> content hash
    nlohmann::json seeds;
    std::vector<StageRecord> stages;
    nlohmann::json errors = nlohmann::json::array();
    nlohmann::json results = nlohmann::json::object();
    std::string started_at;
    std::string finished_at;

    nlohmann::json to_json() const;
    std::vector<std::string> stage_names() const;
};

struct RunOptions {
    bool mock = false;  // also predict with the kNN mock and evaluate
};

struct RunResult {
    RunManifest manifest;
    std::map<std::string, EvalReport> reports;  // by test dataset id (mock runs only)
};

/// ingest -> sample/mix -> pool -> (embeddings) -> retrieve -> render ->
/// export [-> predict -> evaluate]; every artifact lands under output_dir.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// One axis of a sweep, e.g. "k=1..6" or "ordering=similar_first,random".
struct SweepAxis {
    std::string key;
    std::vector<std::string> values;

    static SweepAxis parse(std::string_view spec);
};

struct SweepPoint {
    std::string label;     // "k=3,ordering=random"
    std::string dir_name;  // filesystem-safe form of label
    nlohmann::json config;
};

/// Cartesian product of the axes applied to `base` (a raw config document).
/// Each point's output_dir is `out_dir / dir_name`.
std::vector<SweepPoint> expand_sweep(const nlohmann::json& base, std::span<const SweepAxis> axes,
                                     const std::filesystem::path& out_dir);

/// Collects mock results from run directories under `dir` into a table
/// (rows = runs, columns = datasets, w-F1 x 100) or long-form CSV.
std::string format_report(const std::filesystem::path& dir, std::string_view format);

/// Hex FNV-1a of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace erc
