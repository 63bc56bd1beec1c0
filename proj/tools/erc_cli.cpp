// erc-icl: command-line front end for the corpus, pool, retrieval, prompt,
// evaluation and experiment stages.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"
#include "erc/embedding_store.hpp"
#include "erc/error.hpp"
#include "erc/evaluation.hpp"
#include "erc/experiments.hpp"
#include "erc/pool.hpp"
#include "erc/prompting.hpp"
#include "erc/retrieval.hpp"
#include "erc/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CorpusArgs {
    fs::path path;
    std::string dataset;
    std::string split = "train";
    std::optional<fs::path> labels;
};

// Canonical stores carry their own header; raw files need --dataset.
erc::Corpus load_corpus(const CorpusArgs& args) {
    if (erc::is_canonical(args.path)) return erc::read_canonical(args.path);
    if (args.dataset.empty()) {
        throw erc::Error(erc::ErrorCode::InvalidConfig, args.path.string() + " is not a canonical store; pass --dataset");
    }
    const auto split = erc::parse_split(args.split);
    if (args.labels) return erc::parse_corpus(args.path, args.dataset, split, erc::load_label_space(*args.labels));
    return erc::parse_corpus(args.path, args.dataset, split);
}

void add_corpus_flags(CLI::App* cmd, CorpusArgs& args, const std::string& flag, const std::string& what) {
    cmd->add_option(flag, args.path, what)->required();
    cmd->add_option("--dataset", args.dataset, "Dataset id (raw corpus files only)");
    cmd->add_option("--split", args.split, "train|val|test (raw corpus files only)");
    cmd->add_option("--labels", args.labels, "Label-space file overriding the built-in space");
}

void write_text(const std::string& text, const std::optional<fs::path>& out) {
    if (!out) {
        std::cout << text;
        return;
    }
    std::ofstream f(*out, std::ios::binary);
    if (!f) throw erc::Error(erc::ErrorCode::Io, "cannot write " + out->string());
    f << text;
}

void print_stats(const erc::Corpus& corpus) {
    const auto stats = erc::corpus_stats(corpus);
    json per_label = json::object();
    for (const auto& [label, count] : stats.per_label) per_label[label] = count;
    std::cout << json{{"dataset_id", corpus.dataset_id()},
                      {"split", std::string(erc::to_string(corpus.split()))},
                      {"dialogues", stats.dialogues},
                      {"utterances", stats.utterances},
                      {"classes", corpus.label_space().size()},
                      {"per_label", per_label}}
                     .dump(2)
              << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw erc::Error(erc::ErrorCode::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw erc::Error(erc::ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
}

void print_results(const erc::RunResult& result) {
    for (const auto& [dataset_id, report] : result.reports) {
        std::cout << dataset_id << ": weighted_f1=" << report.weighted_f1 << " invalid=" << report.invalid_count << "/"
                  << report.total << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"In-context instruction-tuning data pipeline for emotion recognition in conversations"};
    app.require_subcommand(1);

    // ingest / stats
    CorpusArgs ingest_in;
    fs::path ingest_out;
    auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and write a canonical store");
    ingest->add_option("--input", ingest_in.path, "Line-delimited utterance records")->required();
    ingest->add_option("--dataset", ingest_in.dataset, "Dataset id")->required();
    ingest->add_option("--split", ingest_in.split, "train|val|test")->required();
    ingest->add_option("--labels", ingest_in.labels, "Label-space file overriding the built-in space");
    ingest->add_option("--out", ingest_out, "Canonical store path")->required();

    CorpusArgs stats_in;
    auto* stats = app.add_subcommand("stats", "Dialogue, utterance and per-label counts");
    add_corpus_flags(stats, stats_in, "--corpus", "Corpus file or canonical store");

    // pool
    CorpusArgs pool_in;
    fs::path pool_out;
    auto* build_pool = app.add_subcommand("build-pool", "Build a demonstration pool from a training corpus");
    add_corpus_flags(build_pool, pool_in, "--train", "Training corpus");
    build_pool->add_option("--out", pool_out, "Pool directory")->required();

    fs::path attach_pool;
    fs::path attach_vectors;
    auto* attach = app.add_subcommand("attach-embeddings", "Attach example vectors to a pool");
    attach->add_option("--pool", attach_pool, "Pool directory")->required();
    attach->add_option("--vectors", attach_vectors, "Embedding file, row i = example i")->required();

    // retrieval
    fs::path retrieve_pool;
    CorpusArgs retrieve_queries;
    std::string retrieve_strategy = "dense";
    std::size_t retrieve_k = 5;
    std::uint64_t retrieve_seed = 0;
    erc::Bm25Params bm25;
    std::optional<fs::path> query_vectors;
    unsigned retrieve_threads = 1;
    fs::path retrieve_out;
    auto* retrieve = app.add_subcommand("retrieve", "Top-k demonstration retrieval for every query utterance");
    retrieve->add_option("--pool", retrieve_pool, "Pool directory")->required();
    add_corpus_flags(retrieve, retrieve_queries, "--queries", "Query corpus");
    retrieve->add_option("--strategy", retrieve_strategy, "random|bm25|dense");
    retrieve->add_option("--k", retrieve_k, "Examples per query");
    retrieve->add_option("--seed", retrieve_seed, "Seed for the random strategy");
    retrieve->add_option("--k1", bm25.k1, "BM25 term saturation");
    retrieve->add_option("--b", bm25.b, "BM25 length normalization");
    retrieve->add_option("--query-vectors", query_vectors, "Query embeddings, row i = i-th query (dense)");
    retrieve->add_option("--threads", retrieve_threads, "Worker threads");
    retrieve->add_option("--out", retrieve_out, "Hits file")->required();

    // prompting
    fs::path render_pool;
    fs::path render_hits;
    CorpusArgs render_queries;
    std::string render_ordering = "similar-first";
    std::uint64_t render_ordering_seed = 0;
    std::optional<std::size_t> render_budget;
    double render_safety = 1.0;
    std::string render_mode = "infer";
    std::string render_strategy = "dense";
    std::optional<std::size_t> render_k;
    fs::path render_out;
    auto* render = app.add_subcommand("render", "Assemble prompts and write a train or infer export");
    render->add_option("--pool", render_pool, "Pool directory")->required();
    render->add_option("--hits", render_hits, "Hits file")->required();
    add_corpus_flags(render, render_queries, "--queries", "Query corpus");
    render->add_option("--ordering", render_ordering, "similar-first|similar-last|random");
    render->add_option("--ordering-seed", render_ordering_seed, "Seed for random ordering");
    render->add_option("--budget", render_budget, "Maximum prompt tokens (default 2048 iemocap, 1024 otherwise)");
    render->add_option("--safety-factor", render_safety, "Fraction of the budget to use");
    render->add_option("--mode", render_mode, "train|infer");
    render->add_option("--strategy", render_strategy, "Strategy recorded in prompt metadata");
    render->add_option("--k", render_k, "Requested k recorded in metadata (default: hits per query)");
    render->add_option("--out", render_out, "Export file")->required();

    // evaluation
    CorpusArgs eval_gold;
    fs::path eval_pred;
    std::optional<fs::path> eval_mapping;
    std::optional<fs::path> eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "Score a predictions file against gold labels");
    add_corpus_flags(evaluate, eval_gold, "--gold", "Gold corpus");
    evaluate->add_option("--pred", eval_pred, "Predictions file")->required();
    evaluate->add_option("--mapping", eval_mapping, "Map gold labels into a unified space first");
    evaluate->add_option("--out", eval_out, "Report path (stdout if omitted)");

    // experiments
    fs::path run_config;
    bool run_mock = false;
    auto* run = app.add_subcommand("run", "Run one experiment config end to end");
    run->add_option("--config", run_config, "Experiment config or run manifest")->required();
    run->add_flag("--mock", run_mock, "Also predict with the kNN mock and evaluate");

    fs::path mock_config;
    fs::path mock_out;
    auto* mock_run = app.add_subcommand("mock-run", "Run an experiment with the kNN mock predictor");
    mock_run->add_option("--config", mock_config, "Experiment config")->required();
    mock_run->add_option("--out", mock_out, "Combined report path")->required();

    fs::path sweep_template;
    std::vector<std::string> sweep_vary;
    std::optional<fs::path> sweep_out;
    bool sweep_run = false;
    bool sweep_mock = false;
    unsigned sweep_jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "Expand a config template over one or more axes");
    sweep->add_option("--template", sweep_template, "Base experiment config")->required();
    sweep->add_option("--vary", sweep_vary, "Axis such as k=1..6 or ordering=similar_first,random")->required();
    sweep->add_option("--out", sweep_out, "Sweep root (default: the template's output_dir)");
    sweep->add_flag("--run", sweep_run, "Run every generated config");
    sweep->add_flag("--mock", sweep_mock, "Run with the mock predictor (implies --run)");
    sweep->add_option("--jobs", sweep_jobs, "Experiments to run concurrently");

    fs::path report_dir;
    std::string report_format = "table";
    std::optional<fs::path> report_out;
    auto* report = app.add_subcommand("report", "Tabulate mock results from run directories");
    report->add_option("--dir", report_dir, "Run or sweep directory")->required();
    report->add_option("--format", report_format, "table|csv");
    report->add_option("--out", report_out, "Output path (stdout if omitted)");

    // synthetic vectors
    CorpusArgs synth_in;
    std::string synth_kind = "bow";
    std::size_t synth_dim = 64;
    fs::path synth_out;
    auto* synth = app.add_subcommand("synth-vectors", "Write stand-in utterance vectors for a corpus");
    add_corpus_flags(synth, synth_in, "--corpus", "Corpus file or canonical store");
    synth->add_option("--kind", synth_kind, "bow|label|dialogue");
    synth->add_option("--dim", synth_dim, "Dimension for bow and dialogue vectors");
    synth->add_option("--out", synth_out, "Embedding file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            const auto corpus = load_corpus(ingest_in);
            erc::write_canonical(corpus, ingest_out);
            print_stats(corpus);
        } else if (*stats) {
            print_stats(load_corpus(stats_in));
        } else if (*build_pool) {
            pool_in.split = "train";
            auto pool = erc::build_pool(load_corpus(pool_in));
            erc::save_pool(pool, pool_out);
            std::cout << "pool: " << pool.size() << " examples\n";
        } else if (*attach) {
            auto pool = erc::attach_embeddings(erc::load_pool(attach_pool), erc::load_embedding_store(attach_vectors));
            erc::save_pool(pool, attach_pool);
            std::cout << "attached " << pool.size() << " x " << *pool.embedding_dim() << '\n';
        } else if (*retrieve) {
            const auto pool = erc::load_pool(retrieve_pool);
            auto queries = erc::queries_from_corpus(load_corpus(retrieve_queries));
            if (query_vectors) erc::attach_query_embeddings(queries, erc::load_embedding_store(*query_vectors));
            const erc::Retriever retriever(pool, erc::parse_strategy(retrieve_strategy), bm25);
            auto hits = retriever.retrieve_batch(queries, retrieve_k, retrieve_seed, retrieve_threads);
            std::vector<erc::QueryHits> out;
            out.reserve(queries.size());
            for (std::size_t i = 0; i < queries.size(); ++i) out.push_back({queries[i].query_id, std::move(hits[i])});
            erc::write_hits(out, retrieve_out);
            std::cout << "retrieved for " << out.size() << " queries\n";
        } else if (*render) {
            const auto pool = erc::load_pool(render_pool);
            const auto corpus = load_corpus(render_queries);
            const auto queries = erc::queries_from_corpus(corpus);
            const auto hits = erc::read_hits(render_hits);
            std::map<std::string, const erc::QueryHits*> by_query;
            for (const auto& h : hits) by_query.emplace(h.query_id, &h);
            const auto mode = erc::parse_export_mode(render_mode);

            erc::RenderOptions options;
            options.strategy = erc::parse_strategy(render_strategy);
            options.ordering = {erc::parse_ordering(render_ordering), render_ordering_seed};
            options.budget = {render_budget ? *render_budget : erc::default_budget(pool.dataset_id()), render_safety};

            std::vector<erc::PromptRecord> records;
            records.reserve(queries.size());
            std::size_t q = 0;
            for (const auto& dialogue : corpus.dialogues()) {
                for (const auto& u : dialogue.turns) {
                    const auto& query = queries[q++];
                    auto it = by_query.find(query.query_id);
                    std::vector<erc::RetrievalHit> query_hits;
                    if (it != by_query.end()) query_hits = it->second->hits;
                    options.k_requested = render_k ? *render_k : query_hits.size();
                    std::optional<std::string> completion;
                    if (mode == erc::ExportMode::Train) completion = u.label;
                    records.push_back(
                        erc::render_prompt(query, std::move(query_hits), pool, pool.label_space(), options, completion)
                            .record);
                }
            }
            erc::export_records(records, mode, render_out);
            std::cout << "rendered " << records.size() << " prompts\n";
        } else if (*evaluate) {
            auto gold = load_corpus(eval_gold);
            if (eval_mapping) gold = erc::apply_mapping(gold, erc::load_label_mapping(*eval_mapping));
            const auto preds = erc::read_predictions(eval_pred, gold.label_space());
            const auto result = erc::evaluate(erc::golds_from_corpus(gold), preds, gold.label_space());
            write_text(erc::report_to_json(result).dump(2) + "\n", eval_out);
        } else if (*run) {
            const auto result = erc::run_experiment(erc::load_experiment_config(run_config), {run_mock});
            std::cout << "run complete: " << result.manifest.config_hash << '\n';
            print_results(result);
        } else if (*mock_run) {
            const auto config = erc::load_experiment_config(mock_config);
            const auto result = erc::run_experiment(config, {true});
            fs::copy_file(config.output_dir / "report.json", mock_out, fs::copy_options::overwrite_existing);
            print_results(result);
        } else if (*sweep) {
            const auto base = read_json(sweep_template);
            const auto base_dir = fs::absolute(sweep_template).parent_path();
            // Resolve the template once so generated configs stay valid
            // wherever they are written.
            const auto resolved = erc::config_to_json(erc::parse_experiment_config(base, base_dir));
            std::vector<erc::SweepAxis> axes;
            for (const auto& v : sweep_vary) axes.push_back(erc::SweepAxis::parse(v));
            const fs::path root = sweep_out ? fs::absolute(*sweep_out) : fs::path(resolved["output_dir"].get<std::string>());
            auto points = erc::expand_sweep(resolved, axes, root);
            std::vector<fs::path> configs;
            for (const auto& p : points) {
                const auto dir = root / p.dir_name;
                fs::create_directories(dir);
                std::ofstream(dir / "config.json") << p.config.dump(2) << '\n';
                configs.push_back(dir / "config.json");
                std::cout << p.label << " -> " << (dir / "config.json").string() << '\n';
            }
            if (sweep_run || sweep_mock) {
                std::atomic<std::size_t> next{0};
                std::vector<std::string> failures(configs.size());
                {
                    std::vector<std::jthread> workers;
                    for (unsigned w = 0; w < std::max(1u, sweep_jobs); ++w) {
                        workers.emplace_back([&] {
                            for (std::size_t i = next++; i < configs.size(); i = next++) {
                                try {
                                    erc::run_experiment(erc::load_experiment_config(configs[i]), {sweep_mock});
                                } catch (const std::exception& e) {
                                    failures[i] = e.what();
                                }
                            }
                        });
                    }
                }
                bool failed = false;
                for (std::size_t i = 0; i < configs.size(); ++i) {
                    if (!failures[i].empty()) {
                        std::cerr << points[i].label << ": " << failures[i] << '\n';
                        failed = true;
                    }
                }
                if (failed) return 1;
                if (sweep_mock) std::cout << erc::format_report(root, "table");
            }
        } else if (*report) {
            write_text(erc::format_report(report_dir, report_format), report_out);
        } else if (*synth) {
            const auto corpus = load_corpus(synth_in);
            erc::EmbeddingStore store;
            if (synth_kind == "bow") {
                store = erc::hashed_bow_vectors(corpus, synth_dim);
            } else if (synth_kind == "label") {
                store = erc::label_onehot_vectors(corpus);
            } else if (synth_kind == "dialogue") {
                store = erc::dialogue_onehot_vectors(corpus, synth_dim);
            } else {
                throw erc::Error(erc::ErrorCode::InvalidConfig, "unknown vector kind '" + synth_kind + "'");
            }
            erc::write_embedding_store(store, synth_out);
            std::cout << "wrote " << store.size() << " vectors\n";
        }
    } catch (const erc::Error& e) {
        std::cerr << json{{"error", std::string(erc::to_string(e.code()))}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
