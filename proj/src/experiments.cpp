#include "erc/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <unordered_map>
#include <sstream>

#include "erc/error.hpp"
#include "erc/mock_predictor.hpp"
#include "erc/pool.hpp"
#include "erc/random.hpp"
#include "erc/text.hpp"

namespace erc {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Proportion

namespace {

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
    s = text::trim(s);
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::InvalidConfig, "bad " + std::string(what) + " '" + std::string(s) + "'");
    }
    return value;
}

}  // namespace

Proportion Proportion::parse(std::string_view text) {
    Proportion p;
    auto slash = text.find('/');
    if (slash == std::string_view::npos) {
        p.num = parse_u64(text, "proportion");
        p.den = 1;
    } else {
        p.num = parse_u64(text.substr(0, slash), "proportion");
        p.den = parse_u64(text.substr(slash + 1), "proportion");
    }
    if (p.den == 0 || p.num == 0 || p.num > p.den) {
        throw Error(ErrorCode::InvalidConfig, "proportion must lie in (0, 1], got '" + std::string(text) + "'");
    }
    const auto g = std::gcd(p.num, p.den);
    p.num /= g;
    p.den /= g;
    return p;
}

std::string Proportion::str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
}

std::size_t Proportion::of(std::size_t count) const {
    return static_cast<std::size_t>((num * count + den - 1) / den);
}

std::span<const Proportion> standard_proportions() {
    static const Proportion grid[] = {{1, 64}, {1, 32}, {1, 16}, {1, 8}, {1, 4}, {1, 2}, {1, 1}};
    return grid;
}

std::string_view to_string(RunMode mode) { return mode == RunMode::Single ? "single" : "mix"; }

std::string_view to_string(Ablation ablation) {
    switch (ablation) {
        case Ablation::Full: return "full";
        case Ablation::NoExamples: return "no_examples";
        case Ablation::NoTuning: return "no_tuning";
        case Ablation::ZeroShot: return "zero_shot";
    }
    return "full";
}

Ablation parse_ablation(std::string_view name) {
    if (name == "full") return Ablation::Full;
    if (name == "no_examples" || name == "no-examples") return Ablation::NoExamples;
    if (name == "no_tuning" || name == "no-tuning") return Ablation::NoTuning;
    if (name == "zero_shot" || name == "zero-shot") return Ablation::ZeroShot;
    throw Error(ErrorCode::InvalidConfig, "unknown ablation '" + std::string(name) + "'");
}

std::size_t default_budget(std::string_view dataset_id) { return dataset_id == "iemocap" ? 2048 : 1024; }

// ---------------------------------------------------------------------------
// Config

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative()) path = base / path;
    return path.lexically_normal();
}

std::optional<fs::path> optional_path(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return resolve(base, j[key].get<std::string>());
}

bool examples_disabled(Ablation a) { return a == Ablation::NoExamples || a == Ablation::ZeroShot; }
bool exports_training(Ablation a) { return a == Ablation::Full || a == Ablation::NoExamples; }

}  // namespace

ExperimentConfig parse_experiment_config(const json& document, const fs::path& base_dir) {
    const json& j = document.contains("config") && document.contains("config_hash") ? document["config"] : document;
    ExperimentConfig c;
    try {
        c.name = j.value("name", std::string());
        c.mode = j.value("mode", std::string("single")) == "mix" ? RunMode::Mix : RunMode::Single;
        if (auto mode = j.value("mode", std::string("single")); mode != "mix" && mode != "single") {
            throw Error(ErrorCode::InvalidConfig, "mode must be single or mix, got '" + mode + "'");
        }
        for (const auto& d : j.at("datasets")) {
            DatasetSpec spec;
            spec.dataset_id = d.at("dataset_id").get<std::string>();
            spec.train = resolve(base_dir, d.at("train").get<std::string>());
            spec.test = resolve(base_dir, d.at("test").get<std::string>());
            spec.val = optional_path(d, "val", base_dir);
            spec.labels = optional_path(d, "labels", base_dir);
            spec.train_vectors = optional_path(d, "train_vectors", base_dir);
            spec.test_vectors = optional_path(d, "test_vectors", base_dir);
            c.datasets.push_back(std::move(spec));
        }
        if (j.contains("proportion")) {
            const auto& p = j["proportion"];
            c.proportion = Proportion::parse(p.is_string() ? p.get<std::string>() : std::to_string(p.get<int>()));
        }
        c.mapping_path = optional_path(j, "mapping", base_dir);
        if (j.contains("retriever")) {
            const auto& r = j["retriever"];
            if (r.is_string()) {
                c.strategy = parse_strategy(r.get<std::string>());
            } else {
                c.strategy = parse_strategy(r.value("strategy", std::string("dense")));
                c.bm25.k1 = r.value("k1", c.bm25.k1);
                c.bm25.b = r.value("b", c.bm25.b);
            }
        }
        c.ablation = parse_ablation(j.value("ablation", std::string("full")));
        c.k = j.contains("k") ? j["k"].get<std::size_t>() : (examples_disabled(c.ablation) ? 0 : 5);
        if (j.contains("ordering")) {
            const auto& o = j["ordering"];
            if (o.is_string()) {
                c.ordering.kind = parse_ordering(o.get<std::string>());
            } else {
                c.ordering.kind = parse_ordering(o.value("kind", std::string("similar_first")));
                c.ordering.seed = o.value("seed", std::uint64_t{0});
            }
        }
        if (j.contains("budget") && !j["budget"].is_null()) c.budget = j["budget"].get<std::size_t>();
        c.budget_safety_factor = j.value("budget_safety_factor", 1.0);
        c.seed = j.value("seed", std::uint64_t{0});
        c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        c.threads = j.value("threads", 1u);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    validate_config(c);
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return parse_experiment_config(j, fs::absolute(path).parent_path());
}

json config_to_json(const ExperimentConfig& c) {
    auto opt = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
    json datasets = json::array();
    for (const auto& d : c.datasets) {
        datasets.push_back({{"dataset_id", d.dataset_id},
                            {"train", d.train.string()},
                            {"test", d.test.string()},
                            {"val", opt(d.val)},
                            {"labels", opt(d.labels)},
                            {"train_vectors", opt(d.train_vectors)},
                            {"test_vectors", opt(d.test_vectors)}});
    }
    return json{{"name", c.name},
                {"mode", std::string(to_string(c.mode))},
                {"datasets", std::move(datasets)},
                {"proportion", c.proportion.str()},
                {"mapping", opt(c.mapping_path)},
                {"retriever", {{"strategy", std::string(to_string(c.strategy))}, {"k1", c.bm25.k1}, {"b", c.bm25.b}}},
                {"k", c.k},
                {"ordering", {{"kind", std::string(to_string(c.ordering.kind))}, {"seed", c.ordering.seed}}},
                {"budget", c.budget ? json(*c.budget) : json(nullptr)},
                {"budget_safety_factor", c.budget_safety_factor},
                {"seed", c.seed},
                {"ablation", std::string(to_string(c.ablation))},
                {"output_dir", c.output_dir.string()},
                {"threads", c.threads}};
}

void validate_config(const ExperimentConfig& c) {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    if (c.datasets.empty()) fail("at least one dataset is required");
    if (c.mode == RunMode::Single && c.datasets.size() != 1) fail("single mode takes exactly one dataset");
    if (c.mode == RunMode::Mix && !c.mapping_path) fail("mix mode requires a label mapping");
    std::vector<std::string> ids;
    for (const auto& d : c.datasets) {
        if (d.dataset_id.empty() || d.dataset_id.find(':') != std::string::npos) {
            fail("dataset ids must be non-empty and free of ':'");
        }
        ids.push_back(d.dataset_id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) fail("duplicate dataset id");
    if (examples_disabled(c.ablation) != (c.k == 0)) {
        fail("k must be 0 exactly when ablation is no_examples or zero_shot (k=" + std::to_string(c.k) +
             ", ablation=" + std::string(to_string(c.ablation)) + ")");
    }
    if (c.strategy == Strategy::Dense && c.k > 0) {
        for (const auto& d : c.datasets) {
            if (!d.train_vectors || !d.test_vectors) {
                fail("dense retrieval needs train_vectors and test_vectors for '" + d.dataset_id + "'");
            }
        }
    }
    if (c.budget_safety_factor <= 0.0 || c.budget_safety_factor > 1.0) fail("budget_safety_factor must be in (0, 1]");
    if (c.threads == 0) fail("threads must be >= 1");
    if (c.output_dir.empty()) fail("output_dir is required");
}

// ---------------------------------------------------------------------------
// Sampling and mixing

Corpus sample_proportion(const Corpus& corpus, Proportion p, std::uint64_t seed) {
    if (p.num == p.den) return corpus;
    const std::size_t total = corpus.dialogues().size();
    const std::size_t keep = p.of(total);
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, "sample_proportion"));
    rng.partial_shuffle(std::span<std::size_t>(order), keep);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<Dialogue> dialogues;
    dialogues.reserve(keep);
    for (std::size_t idx : order) dialogues.push_back(corpus.dialogues()[idx]);
    return Corpus(corpus.dataset_id(), corpus.split(), corpus.label_space(), std::move(dialogues));
}

Corpus prefix_dialogue_ids(const Corpus& corpus, std::string_view prefix) {
    std::vector<Dialogue> dialogues = corpus.dialogues();
    for (auto& d : dialogues) {
        d.id = std::string(prefix) + ":" + d.id;
        for (auto& u : d.turns) u.dialogue_id = d.id;
    }
    return Corpus(corpus.dataset_id(), corpus.split(), corpus.label_space(), std::move(dialogues));
}

Corpus mix_datasets(std::span<const Corpus> corpora, const LabelMapping& mapping, Proportion p, std::uint64_t seed) {
    std::vector<Dialogue> merged;
    std::set<std::string> ids;
    for (const auto& corpus : corpora) {
        if (corpus.split() != Split::Train) {
            throw Error(ErrorCode::InvalidConfig, "mixing expects train splits, got " +
                                                      std::string(to_string(corpus.split())) + " of " +
                                                      corpus.dataset_id());
        }
        auto part = prefix_dialogue_ids(apply_mapping(sample_proportion(corpus, p, seed), mapping), corpus.dataset_id());
        for (const auto& d : part.dialogues()) {
            if (!ids.insert(d.id).second) throw Error(ErrorCode::DialogueIdCollision, d.id);
            merged.push_back(d);
        }
    }
    return Corpus("mix", Split::Train, mapping.unified_space(), std::move(merged));
}

// ---------------------------------------------------------------------------
// Manifest

json RunManifest::to_json() const {
    json stage_list = json::array();
    for (const auto& s : stages) stage_list.push_back({{"name", s.name}, {"counts", s.counts}});
    return json{{"config_hash", config_hash}, {"config", config},   {"inputs", inputs},
                {"artifacts", artifacts},     {"seeds", seeds},     {"stages", std::move(stage_list)},
                {"errors", errors},           {"results", results}, {"started_at", started_at},
                {"finished_at", finished_at}};
}

std::vector<std::string> RunManifest::stage_names() const {
    std::vector<std::string> names;
    for (const auto& s : stages) names.push_back(s.name);
    return names;
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        hash = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), hash);
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << hash;
    return out.str();
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

// Row of every (dialogue, turn) in a corpus's enumeration order.
std::unordered_map<std::string, std::size_t> row_offsets(const Corpus& corpus) {
    std::unordered_map<std::string, std::size_t> start;
    std::size_t row = 0;
    for (const auto& d : corpus.dialogues()) {
        start.emplace(d.id, row);
        row += d.turns.size();
    }
    return start;
}

std::string source_of(const std::string& dialogue_id, const ExperimentConfig& config) {
    if (config.mode == RunMode::Single) return config.datasets.front().dataset_id;
    return dialogue_id.substr(0, dialogue_id.find(':'));
}

std::string original_id(const std::string& dialogue_id, const ExperimentConfig& config) {
    if (config.mode == RunMode::Single) return dialogue_id;
    return dialogue_id.substr(dialogue_id.find(':') + 1);
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

struct Ingested {
    LabelSpace space;
    Corpus train;
    Corpus test;
};

class Pipeline {
public:
    Pipeline(const ExperimentConfig& config, const RunOptions& options) : config_(config), options_(options) {}

    RunResult run() {
        manifest_.started_at = utc_now();
        manifest_.config = config_to_json(config_);
        // Where results land does not change what the experiment is.
        json identity = manifest_.config;
        identity.erase("output_dir");
        manifest_.config_hash = hex64(fnv1a64(identity.dump()));
        manifest_.seeds = {{"seed", config_.seed},
                           {"ordering_seed", config_.ordering.seed},
                           {"sampling_seed", config_.seed},
                           {"retrieval_seed", config_.seed}};
        fs::create_directories(config_.output_dir);

        stage("ingest", [&] { ingest(); });
        stage(config_.mode == RunMode::Mix ? "mix" : "sample", [&] { select_training_data(); });
        stage("pool", [&] { build(); });
        if (retrieval_needed() && config_.strategy == Strategy::Dense) stage("embeddings", [&] { embed(); });
        if (retrieval_needed() && config_.strategy == Strategy::Bm25) stage("index", [&] { index(); });
        stage("retrieve", [&] { retrieve_all(); });
        stage("render", [&] { render_all(); });
        stage("export", [&] { export_all(); });
        if (options_.mock) {
            stage("predict", [&] { predict_all(); });
            stage("evaluate", [&] { evaluate_all(); });
        }
        manifest_.finished_at = utc_now();
        write_json(manifest_.to_json(), config_.output_dir / "manifest.json");
        return RunResult{manifest_, std::move(reports_)};
    }

private:
    template <typename Fn>
    void stage(const std::string& name, Fn&& fn) {
        current_counts_ = json::object();
        try {
            fn();
        } catch (const Error& e) {
            manifest_.errors.push_back({{"stage", name}, {"code", std::string(to_string(e.code()))}, {"message", e.what()}});
            manifest_.stages.push_back(StageRecord{name, current_counts_});
            manifest_.finished_at = utc_now();
            write_json(manifest_.to_json(), config_.output_dir / "manifest.json");
            throw;
        } catch (const std::exception& e) {
            manifest_.errors.push_back({{"stage", name}, {"code", "Internal"}, {"message", e.what()}});
            manifest_.stages.push_back(StageRecord{name, current_counts_});
            manifest_.finished_at = utc_now();
            write_json(manifest_.to_json(), config_.output_dir / "manifest.json");
            throw;
        }
        manifest_.stages.push_back(StageRecord{name, current_counts_});
    }

    bool retrieval_needed() const { return config_.k > 0; }

    void record_artifact(const fs::path& path) {
        manifest_.artifacts[fs::relative(path, config_.output_dir).generic_string()] = file_digest(path);
    }

    void ingest() {
        const auto corpus_dir = config_.output_dir / "corpus";
        fs::create_directories(corpus_dir);
        json inputs = json::array();
        for (const auto& spec : config_.datasets) {
            LabelSpace space = spec.labels ? load_label_space(*spec.labels) : builtin_label_space(spec.dataset_id);
            Ingested data{space, parse_corpus(spec.train, spec.dataset_id, Split::Train, space),
                          parse_corpus(spec.test, spec.dataset_id, Split::Test, space)};
            json counts{{"train", {{"dialogues", data.train.dialogues().size()}, {"utterances", data.train.utterance_count()}}},
                        {"test", {{"dialogues", data.test.dialogues().size()}, {"utterances", data.test.utterance_count()}}},
                        {"classes", space.size()}};
            write_canonical(data.train, corpus_dir / (spec.dataset_id + ".train.jsonl"));
            write_canonical(data.test, corpus_dir / (spec.dataset_id + ".test.jsonl"));
            record_artifact(corpus_dir / (spec.dataset_id + ".train.jsonl"));
            record_artifact(corpus_dir / (spec.dataset_id + ".test.jsonl"));
            if (spec.val) {
                auto val = parse_corpus(*spec.val, spec.dataset_id, Split::Val, space);
                counts["val"] = {{"dialogues", val.dialogues().size()}, {"utterances", val.utterance_count()}};
            }
            json in{{"dataset_id", spec.dataset_id},
                    {"train", fs::absolute(spec.train).string()},
                    {"train_digest", file_digest(spec.train)},
                    {"test", fs::absolute(spec.test).string()},
                    {"test_digest", file_digest(spec.test)}};
            if (spec.val) in["val"] = fs::absolute(*spec.val).string();
            if (spec.labels) in["labels"] = fs::absolute(*spec.labels).string();
            if (spec.train_vectors) in["train_vectors"] = fs::absolute(*spec.train_vectors).string();
            if (spec.test_vectors) in["test_vectors"] = fs::absolute(*spec.test_vectors).string();
            inputs.push_back(std::move(in));
            current_counts_[spec.dataset_id] = std::move(counts);
            sources_.push_back(std::move(data));
        }
        manifest_.inputs = {{"datasets", std::move(inputs)}};
        if (config_.mapping_path) manifest_.inputs["mapping"] = fs::absolute(*config_.mapping_path).string();
    }

    void select_training_data() {
        if (config_.mode == RunMode::Single) {
            auto& src = sources_.front();
            training_ = sample_proportion(src.train, config_.proportion, config_.seed);
            space_ = src.space;
            tests_.emplace_back(src.train.dataset_id(), src.test);
        } else {
            const auto mapping = load_label_mapping(*config_.mapping_path);
            std::vector<Corpus> trains;
            for (const auto& src : sources_) trains.push_back(src.train);
            training_ = mix_datasets(trains, mapping, config_.proportion, config_.seed);
            space_ = mapping.unified_space();
            for (const auto& src : sources_) {
                tests_.emplace_back(src.test.dataset_id(),
                                    prefix_dialogue_ids(apply_mapping(src.test, mapping), src.test.dataset_id()));
            }
        }
        current_counts_ = {{"proportion", config_.proportion.str()},
                           {"dialogues", training_->dialogues().size()},
                           {"utterances", training_->utterance_count()},
                           {"labels", space_->labels()}};
        write_canonical(*training_, config_.output_dir / "corpus" / "training.jsonl");
        record_artifact(config_.output_dir / "corpus" / "training.jsonl");
    }

    void build() {
        pool_ = build_pool(*training_);
        save_pool(*pool_, config_.output_dir / "pool");
        record_artifact(config_.output_dir / "pool" / "examples.jsonl");
        current_counts_ = {{"examples", pool_->size()}, {"dialogues", pool_->by_dialogue().size()}};
    }

    void embed() {
        // Vectors are supplied per source split; re-key them onto the sampled
        // or mixed pool through (source, dialogue, turn).
        std::map<std::string, std::pair<EmbeddingStore, std::unordered_map<std::string, std::size_t>>> train_rows;
        for (std::size_t i = 0; i < config_.datasets.size(); ++i) {
            const auto& spec = config_.datasets[i];
            train_rows.emplace(spec.dataset_id,
                               std::pair{load_embedding_store(*spec.train_vectors), row_offsets(sources_[i].train)});
        }
        EmbeddingStore pool_vectors;
        for (const auto& ex : pool_->examples()) {
            const auto& [store, offsets] = train_rows.at(source_of(ex.dialogue_id, config_));
            const std::size_t row = offsets.at(original_id(ex.dialogue_id, config_)) + ex.context.size();
            if (!store.contains(row)) {
                throw Error(ErrorCode::MissingVector, "train vector row " + std::to_string(row) + " for " + ex.dialogue_id);
            }
            auto v = store.at(row);
            pool_vectors.set(ex.example_id, std::vector<float>(v.begin(), v.end()));
        }
        pool_ = attach_embeddings(*pool_, pool_vectors);
        for (std::size_t i = 0; i < config_.datasets.size(); ++i) {
            test_vectors_.emplace(config_.datasets[i].dataset_id, load_embedding_store(*config_.datasets[i].test_vectors));
        }
        current_counts_ = {{"dim", *pool_->embedding_dim()}, {"pool_vectors", pool_->size()}};
    }

    void index() {
        retriever_.emplace(*pool_, config_.strategy, config_.bm25);
        const auto* idx = retriever_->bm25_index();
        current_counts_ = {{"documents", idx->doc_count()},
                           {"terms", idx->vocabulary_size()},
                           {"avg_doc_length", idx->avg_doc_length()},
                           {"k1", config_.bm25.k1},
                           {"b", config_.bm25.b}};
    }

    std::vector<QueryHits> retrieve_set(std::vector<Query>& queries) {
        std::vector<QueryHits> out;
        out.reserve(queries.size());
        if (!retrieval_needed()) {
            for (const auto& q : queries) out.push_back(QueryHits{q.query_id, {}});
            return out;
        }
        auto hits = retriever_->retrieve_batch(queries, config_.k, config_.seed, config_.threads);
        for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(QueryHits{queries[i].query_id, std::move(hits[i])});
        return out;
    }

    void retrieve_all() {
        if (retrieval_needed() && !retriever_) retriever_.emplace(*pool_, config_.strategy, config_.bm25);
        std::size_t leaks = 0;
        std::size_t total_hits = 0;
        auto audit = [&](const std::vector<Query>& queries, const std::vector<QueryHits>& hits) {
            for (std::size_t i = 0; i < queries.size(); ++i) {
                for (const auto& h : hits[i].hits) {
                    ++total_hits;
                    if (pool_->at(h.example_id).dialogue_id == queries[i].dialogue_id) ++leaks;
                }
            }
        };
        if (exports_training(config_.ablation)) {
            train_queries_ = queries_from_corpus(*training_);
            if (retrieval_needed() && config_.strategy == Strategy::Dense) {
                const auto& m = pool_->embeddings();
                for (std::size_t i = 0; i < train_queries_.size(); ++i) {
                    auto row = m.row(i);
                    train_queries_[i].embedding.assign(row.begin(), row.end());
                }
            }
            train_hits_ = retrieve_set(train_queries_);
            audit(train_queries_, train_hits_);
            if (retrieval_needed()) write_hits(train_hits_, config_.output_dir / "hits_train.jsonl");
        }
        for (const auto& [dataset_id, test] : tests_) {
            auto queries = queries_from_corpus(test);
            if (retrieval_needed() && config_.strategy == Strategy::Dense) {
                attach_query_embeddings(queries, test_vectors_.at(dataset_id));
            }
            auto hits = retrieve_set(queries);
            audit(queries, hits);
            if (retrieval_needed()) {
                const auto path = config_.output_dir / ("hits_" + dataset_id + ".jsonl");
                write_hits(hits, path);
                record_artifact(path);
            }
            test_queries_[dataset_id] = std::move(queries);
            test_hits_[dataset_id] = std::move(hits);
        }
        if (retrieval_needed() && exports_training(config_.ablation)) {
            record_artifact(config_.output_dir / "hits_train.jsonl");
        }
        current_counts_ = {{"strategy", std::string(to_string(config_.strategy))},
                           {"k", config_.k},
                           {"hits", total_hits},
                           {"same_dialogue_hits", leaks}};
    }

    RenderOptions options_for(const std::string& dialogue_id) const {
        RenderOptions o;
        o.strategy = config_.strategy;
        o.k_requested = config_.k;
        o.ordering = config_.ordering;
        o.budget.max_tokens = config_.budget ? *config_.budget : default_budget(source_of(dialogue_id, config_));
        o.budget.safety_factor = config_.budget_safety_factor;
        return o;
    }

    std::vector<RenderedPrompt> render_set(const std::vector<Query>& queries, const std::vector<QueryHits>& hits,
                                           const Corpus* gold_source) {
        std::vector<RenderedPrompt> out;
        out.reserve(queries.size());
        std::size_t turn = 0;
        const Dialogue* dialogue = nullptr;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const auto& q = queries[i];
            std::optional<std::string> completion;
            if (gold_source != nullptr) {
                if (dialogue == nullptr || dialogue->id != q.dialogue_id) {
                    dialogue = gold_source->find(q.dialogue_id);
                    turn = 0;
                }
                completion = dialogue->turns[turn++].label;
            }
            out.push_back(render_prompt(q, hits[i].hits, *pool_, *space_, options_for(q.dialogue_id), completion));
            max_tokens_seen_ = std::max(max_tokens_seen_, out.back().record.metadata.token_estimate);
            rendered_examples_ += out.back().record.metadata.k_rendered;
            truncated_ += out.back().record.metadata.history_turns_dropped > 0 ? 1 : 0;
        }
        return out;
    }

    void render_all() {
        if (exports_training(config_.ablation)) train_prompts_ = render_set(train_queries_, train_hits_, &*training_);
        for (const auto& [dataset_id, test] : tests_) {
            test_prompts_[dataset_id] = render_set(test_queries_.at(dataset_id), test_hits_.at(dataset_id), nullptr);
        }
        current_counts_ = {{"train_prompts", train_prompts_.size()},
                           {"rendered_examples", rendered_examples_},
                           {"history_truncated_prompts", truncated_},
                           {"max_token_estimate", max_tokens_seen_}};
        for (const auto& [dataset_id, prompts] : test_prompts_) current_counts_["infer_prompts_" + dataset_id] = prompts.size();
    }

    static std::vector<PromptRecord> records_of(const std::vector<RenderedPrompt>& prompts) {
        std::vector<PromptRecord> records;
        records.reserve(prompts.size());
        for (const auto& p : prompts) records.push_back(p.record);
        return records;
    }

    void export_all() {
        if (exports_training(config_.ablation)) {
            const auto path = config_.output_dir / "train.jsonl";
            export_records(records_of(train_prompts_), ExportMode::Train, path);
            record_artifact(path);
            current_counts_["train"] = train_prompts_.size();
        }
        for (const auto& [dataset_id, prompts] : test_prompts_) {
            const auto path = config_.output_dir / ("infer_" + dataset_id + ".jsonl");
            export_records(records_of(prompts), ExportMode::Infer, path);
            record_artifact(path);
            current_counts_["infer_" + dataset_id] = prompts.size();
        }
    }

    void predict_all() {
        for (const auto& [dataset_id, prompts] : test_prompts_) {
            std::vector<Prediction> preds;
            preds.reserve(prompts.size());
            std::size_t abstained = 0;
            for (const auto& p : prompts) {
                if (p.rendered_hits.empty()) {
                    ++abstained;
                    preds.push_back(make_prediction(p.record.query_id, "", *space_));
                    continue;
                }
                auto mock = predict_knn(p.record.query_id, p.rendered_hits, *pool_);
                preds.push_back(make_prediction(p.record.query_id, mock.label, *space_));
            }
            const auto path = config_.output_dir / ("predictions_" + dataset_id + ".jsonl");
            write_predictions(preds, path);
            record_artifact(path);
            current_counts_[dataset_id] = {{"predictions", preds.size()}, {"no_examples", abstained}};
            predictions_[dataset_id] = std::move(preds);
        }
    }

    void evaluate_all() {
        json combined = json::object();
        for (const auto& [dataset_id, test] : tests_) {
            auto report = evaluate(golds_from_corpus(test), predictions_.at(dataset_id), *space_);
            const auto path = config_.output_dir / ("report_" + dataset_id + ".json");
            write_report(report, path);
            record_artifact(path);
            combined[dataset_id] = report_to_json(report);
            manifest_.results[dataset_id] = {{"weighted_f1", combined[dataset_id]["weighted_f1"]},
                                             {"invalid_count", report.invalid_count},
                                             {"total", report.total}};
            current_counts_[dataset_id] = report.total;
            reports_.emplace(dataset_id, std::move(report));
        }
        const auto path = config_.output_dir / "report.json";
        write_json(json{{"name", config_.name}, {"config_hash", manifest_.config_hash}, {"datasets", combined}}, path);
        record_artifact(path);
    }

    const ExperimentConfig& config_;
    const RunOptions& options_;
    RunManifest manifest_;
    json current_counts_;

    std::vector<Ingested> sources_;
    std::optional<Corpus> training_;
    std::optional<LabelSpace> space_;
    std::vector<std::pair<std::string, Corpus>> tests_;
    std::optional<DemonstrationPool> pool_;
    std::map<std::string, EmbeddingStore> test_vectors_;
    std::optional<Retriever> retriever_;

    std::vector<Query> train_queries_;
    std::vector<QueryHits> train_hits_;
    std::map<std::string, std::vector<Query>> test_queries_;
    std::map<std::string, std::vector<QueryHits>> test_hits_;

    std::vector<RenderedPrompt> train_prompts_;
    std::map<std::string, std::vector<RenderedPrompt>> test_prompts_;
    std::size_t max_tokens_seen_ = 0;
    std::size_t rendered_examples_ = 0;
    std::size_t truncated_ = 0;

    std::map<std::string, std::vector<Prediction>> predictions_;
    std::map<std::string, EvalReport> reports_;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    validate_config(config);
    return Pipeline(config, options).run();
}

// ---------------------------------------------------------------------------
// Sweeps and reports

SweepAxis SweepAxis::parse(std::string_view spec) {
    const auto eq = spec.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(ErrorCode::InvalidConfig, "sweep axis must look like key=values, got '" + std::string(spec) + "'");
    }
    SweepAxis axis;
    axis.key = std::string(text::trim(spec.substr(0, eq)));
    const auto values = spec.substr(eq + 1);
    if (auto dots = values.find(".."); dots != std::string_view::npos) {
        const auto lo = parse_u64(values.substr(0, dots), "range start");
        const auto hi = parse_u64(values.substr(dots + 2), "range end");
        if (lo > hi) throw Error(ErrorCode::InvalidConfig, "empty range in '" + std::string(spec) + "'");
        for (auto v = lo; v <= hi; ++v) axis.values.push_back(std::to_string(v));
    } else {
        std::size_t start = 0;
        while (start <= values.size()) {
            auto comma = values.find(',', start);
            if (comma == std::string_view::npos) comma = values.size();
            auto v = text::trim(values.substr(start, comma - start));
            if (!v.empty()) axis.values.emplace_back(v);
            start = comma + 1;
        }
    }
    if (axis.values.empty()) throw Error(ErrorCode::InvalidConfig, "no values in '" + std::string(spec) + "'");
    static const std::set<std::string> known{"k", "ordering", "retriever", "proportion", "ablation", "seed", "budget"};
    if (!known.contains(axis.key)) throw Error(ErrorCode::InvalidConfig, "cannot sweep over '" + axis.key + "'");
    return axis;
}

namespace {

void apply_axis(json& config, const std::string& key, const std::string& value) {
    if (key == "k" || key == "seed" || key == "budget") {
        config[key] = parse_u64(value, key);
    } else if (key == "ordering") {
        parse_ordering(value);
        std::uint64_t seed = config.contains("ordering") && config["ordering"].is_object()
                                 ? config["ordering"].value("seed", std::uint64_t{0})
                                 : 0;
        config["ordering"] = {{"kind", value}, {"seed", seed}};
    } else if (key == "retriever") {
        parse_strategy(value);
        if (config.contains("retriever") && config["retriever"].is_object()) {
            config["retriever"]["strategy"] = value;
        } else {
            config["retriever"] = {{"strategy", value}};
        }
    } else if (key == "proportion") {
        config[key] = Proportion::parse(value).str();
    } else if (key == "ablation") {
        const auto a = parse_ablation(value);
        config[key] = std::string(to_string(a));
        if (examples_disabled(a)) config["k"] = 0;
    }
}

std::string safe_name(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (c == '/') {
            out += '-';
        } else if (c == '=') {
            out += '-';
        } else if (c == ',') {
            out += "__";
        } else {
            out += c;
        }
    }
    return out;
}

}  // namespace

std::vector<SweepPoint> expand_sweep(const json& base, std::span<const SweepAxis> axes, const fs::path& out_dir) {
    std::vector<SweepPoint> points{SweepPoint{"", "", base}};
    for (const auto& axis : axes) {
        std::vector<SweepPoint> next;
        for (const auto& p : points) {
            for (const auto& value : axis.values) {
                SweepPoint q = p;
                apply_axis(q.config, axis.key, value);
                q.label += (q.label.empty() ? "" : ",") + axis.key + "=" + value;
                next.push_back(std::move(q));
            }
        }
        points = std::move(next);
    }
    const std::string base_name = base.value("name", std::string());
    for (auto& p : points) {
        p.dir_name = p.label.empty() ? "base" : safe_name(p.label);
        p.config["name"] = base_name.empty() ? p.label : base_name + ":" + p.label;
        p.config["output_dir"] = (out_dir / p.dir_name).string();
    }
    return points;
}

std::string format_report(const fs::path& dir, std::string_view format) {
    if (format != "table" && format != "csv") {
        throw Error(ErrorCode::InvalidConfig, "report format must be table or csv");
    }
    struct Row {
        std::string run;
        std::map<std::string, json> results;
    };
    std::vector<fs::path> run_dirs;
    if (fs::exists(dir / "manifest.json")) run_dirs.push_back(dir);
    if (fs::is_directory(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) run_dirs.push_back(entry.path());
        }
    }
    std::sort(run_dirs.begin(), run_dirs.end());
    std::vector<Row> rows;
    std::set<std::string> datasets;
    for (const auto& run_dir : run_dirs) {
        std::ifstream in(run_dir / "manifest.json");
        auto manifest = json::parse(in);
        Row row;
        row.run = manifest["config"].value("name", std::string());
        if (row.run.empty()) row.run = run_dir.filename().string();
        for (auto& [dataset_id, result] : manifest["results"].items()) {
            row.results[dataset_id] = result;
            datasets.insert(dataset_id);
        }
        rows.push_back(std::move(row));
    }

    std::ostringstream out;
    out << std::fixed;
    if (format == "csv") {
        out << "run,dataset,weighted_f1,invalid_count,total\n";
        for (const auto& row : rows) {
            for (const auto& [dataset_id, r] : row.results) {
                out << row.run << ',' << dataset_id << ',' << std::setprecision(4) << r["weighted_f1"].get<double>()
                    << ',' << r["invalid_count"].get<std::size_t>() << ',' << r["total"].get<std::size_t>() << '\n';
            }
        }
        return out.str();
    }
    std::size_t width = 8;
    for (const auto& row : rows) width = std::max(width, row.run.size() + 2);
    out << std::left << std::setw(static_cast<int>(width)) << "run";
    for (const auto& d : datasets) out << std::right << std::setw(12) << d;
    out << '\n';
    for (const auto& row : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << row.run;
        for (const auto& d : datasets) {
            auto it = row.results.find(d);
            if (it == row.results.end()) {
                out << std::right << std::setw(12) << "-";
            } else {
                out << std::right << std::setw(12) << std::setprecision(2) << 100.0 * it->second["weighted_f1"].get<double>();
            }
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace erc
