#include <catch_amalgamated.hpp>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "erc/error.hpp"
#include "erc/experiments.hpp"
#include "erc/synthetic.hpp"
#include "test_support.hpp"

using namespace erc;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an erc::Error");
    return ErrorCode::Io;
}

// Two small synthetic datasets in the iemocap and meld label spaces, written
// to disk together with gold-label one-hot vectors.
struct SmallWorld {
    test::TempDir dir{"exp"};

    SmallWorld() {
        Rng rng(2024);
        for (const char* ds : {"iemocap", "meld"}) {
            const auto space = builtin_label_space(ds);
            const auto train = test::random_corpus(rng, space, 12, 6, Split::Train, "tr");
            const auto test_split = test::random_corpus(rng, space, 4, 6, Split::Test, "te");
            test::write_raw(train, dir / (std::string(ds) + "_train.jsonl"));
            test::write_raw(test_split, dir / (std::string(ds) + "_test.jsonl"));
            write_embedding_store(label_onehot_vectors(train), dir / (std::string(ds) + "_train.bin"));
            write_embedding_store(label_onehot_vectors(test_split), dir / (std::string(ds) + "_test.bin"));
        }
    }

    json dataset(const std::string& ds) const {
        return json{{"dataset_id", ds},
                    {"train", ds + "_train.jsonl"},
                    {"test", ds + "_test.jsonl"},
                    {"train_vectors", ds + "_train.bin"},
                    {"test_vectors", ds + "_test.bin"}};
    }

    json single(const std::string& ds, const std::string& out) const {
        return json{{"name", out}, {"datasets", {dataset(ds)}}, {"seed", 3}, {"output_dir", out}};
    }

    json mix(const std::string& out) const {
        return json{{"name", out},
                    {"mode", "mix"},
                    {"datasets", {dataset("iemocap"), dataset("meld")}},
                    {"mapping", (test::source_dir() / "data" / "mappings" / "unified_example.json").string()},
                    {"retriever", "bm25"},
                    {"seed", 3},
                    {"output_dir", out}};
    }

    ExperimentConfig config(const json& j) const { return parse_experiment_config(j, dir.path()); }
};

}  // namespace

TEST_CASE("proportions") {
    CHECK(Proportion::parse("1/64").of(100) == 2);
    CHECK(Proportion::parse("1").of(100) == 100);
    CHECK(Proportion::parse("2/4") == Proportion{1, 2});
    CHECK(Proportion::parse("1/3").of(10) == 4);
    CHECK(Proportion::parse("1/64").str() == "1/64");
    CHECK(code_of([] { Proportion::parse("0"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { Proportion::parse("3/2"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { Proportion::parse("a/b"); }) == ErrorCode::InvalidConfig);
    CHECK(standard_proportions().size() == 7);
    CHECK(default_budget("iemocap") == 2048);
    CHECK(default_budget("meld") == 1024);
    CHECK(default_budget("emorynlp") == 1024);
}

TEST_CASE("dialogue-level sampling on the IEMOCAP-shaped fixture") {
    const auto train = parse_corpus(test::fixture("iemocap", "train"), "iemocap", Split::Train);
    for (const auto& p : standard_proportions()) {
        const auto sample = sample_proportion(train, p, 9);
        const std::size_t expected = (100 * p.num + p.den - 1) / p.den;
        CHECK(sample.dialogues().size() == expected);
        // Kept dialogues are whole and in original order.
        std::size_t last = 0;
        for (const auto& d : sample.dialogues()) {
            const auto* original = train.find(d.id);
            REQUIRE(original != nullptr);
            CHECK(original->turns == d.turns);
            const auto pos = static_cast<std::size_t>(original - train.dialogues().data());
            CHECK((pos >= last || &d == &sample.dialogues().front()));
            last = pos;
        }
        CHECK(sample_proportion(train, p, 9) == sample);
    }
    CHECK(sample_proportion(train, Proportion::parse("1/8"), 1) != sample_proportion(train, Proportion::parse("1/8"), 2));
}

TEST_CASE("mixing maps, prefixes and concatenates") {
    const auto mapping = load_label_mapping(test::source_dir() / "data" / "mappings" / "unified_example.json");
    std::vector<Corpus> sources;
    for (const char* ds : {"iemocap", "meld", "emorynlp"}) sources.push_back(parse_corpus(test::fixture(ds, "train"), ds, Split::Train));
    for (const auto& p : standard_proportions()) {
        const auto mixed = mix_datasets(sources, mapping, p, 5);
        std::size_t expected_utterances = 0;
        std::size_t expected_dialogues = 0;
        for (const auto& s : sources) {
            const auto part = sample_proportion(s, p, 5);
            expected_utterances += part.utterance_count();
            expected_dialogues += part.dialogues().size();
        }
        CHECK(mixed.utterance_count() == expected_utterances);
        CHECK(mixed.dialogues().size() == expected_dialogues);
        CHECK(mixed.dataset_id() == "mix");
        for (const auto& d : mixed.dialogues()) {
            CHECK(d.id.find(':') != std::string::npos);
            for (const auto& u : d.turns) CHECK(mapping.unified_space().contains(u.label));
        }
    }
    std::vector<Corpus> twice{sources[0], sources[0]};
    CHECK(code_of([&] { mix_datasets(twice, mapping, Proportion{}, 0); }) == ErrorCode::DialogueIdCollision);
}

TEST_CASE("config parsing and validation") {
    SmallWorld world;
    const auto c = world.config(world.single("iemocap", "out"));
    CHECK(c.k == 5);
    CHECK(c.strategy == Strategy::Dense);
    CHECK(c.ordering.kind == OrderingKind::SimilarFirst);
    CHECK(c.datasets[0].train == world.dir / "iemocap_train.jsonl");
    CHECK(c.output_dir == world.dir / "out");

    auto j = world.single("iemocap", "out");
    j["ablation"] = "zero_shot";
    CHECK(world.config(j).k == 0);
    j["k"] = 3;
    CHECK(code_of([&] { world.config(j); }) == ErrorCode::InvalidConfig);

    auto no_k = world.single("iemocap", "out");
    no_k["k"] = 0;
    CHECK(code_of([&] { world.config(no_k); }) == ErrorCode::InvalidConfig);

    auto two = world.mix("out");
    two["mode"] = "single";
    CHECK(code_of([&] { world.config(two); }) == ErrorCode::InvalidConfig);
    auto unmapped = world.mix("out");
    unmapped.erase("mapping");
    CHECK(code_of([&] { world.config(unmapped); }) == ErrorCode::InvalidConfig);
    auto no_vectors = world.single("iemocap", "out");
    no_vectors["datasets"][0].erase("test_vectors");
    CHECK(code_of([&] { world.config(no_vectors); }) == ErrorCode::InvalidConfig);
    no_vectors["retriever"] = "bm25";
    CHECK_NOTHROW(world.config(no_vectors));
    auto bad_mode = world.single("iemocap", "out");
    bad_mode["mode"] = "both";
    CHECK(code_of([&] { world.config(bad_mode); }) == ErrorCode::InvalidConfig);

    // Serialized configs parse back to the same config.
    const auto again = parse_experiment_config(config_to_json(c), "/nowhere");
    CHECK(config_to_json(again) == config_to_json(c));
}

TEST_CASE("single-dataset mock run") {
    SmallWorld world;
    const auto config = world.config(world.single("iemocap", "run"));
    const auto result = run_experiment(config, {true});
    const auto& m = result.manifest;
    CHECK(m.stage_names() ==
          std::vector<std::string>{"ingest", "sample", "pool", "embeddings", "retrieve", "render", "export", "predict",
                                   "evaluate"});
    CHECK(m.errors.empty());
    for (const char* f : {"train.jsonl", "infer_iemocap.jsonl", "hits_train.jsonl", "hits_iemocap.jsonl",
                          "predictions_iemocap.jsonl", "report_iemocap.json", "report.json", "manifest.json"}) {
        CHECK(std::filesystem::exists(config.output_dir / f));
    }
    // Gold-label vectors make every neighbour agree with the target.
    CHECK(result.reports.at("iemocap").weighted_f1 == 1.0);
    CHECK(m.stages[4].counts["same_dialogue_hits"] == 0);

    const auto train = read_records(config.output_dir / "train.jsonl");
    const auto infer = read_records(config.output_dir / "infer_iemocap.jsonl");
    for (const auto& r : train) {
        CHECK(r.completion.has_value());
        CHECK(r.metadata.token_estimate <= 2048);
    }
    for (const auto& r : infer) CHECK_FALSE(r.completion.has_value());

    // Predictions are consumed by the evaluator unchanged.
    const auto space = builtin_label_space("iemocap");
    const auto test_split = parse_corpus(world.dir / "iemocap_test.jsonl", "iemocap", Split::Test);
    const auto preds = read_predictions(config.output_dir / "predictions_iemocap.jsonl", space);
    CHECK(evaluate(golds_from_corpus(test_split), preds, space).weighted_f1 == 1.0);
}

TEST_CASE("runs are reproducible from the same config and from the manifest") {
    SmallWorld world;
    auto j = world.single("meld", "a");
    j["retriever"] = "bm25";
    run_experiment(world.config(j), {true});
    j["output_dir"] = "b";
    run_experiment(world.config(j), {true});
    for (const char* f : {"report.json", "report_meld.json", "train.jsonl", "infer_meld.jsonl", "hits_meld.jsonl",
                          "predictions_meld.jsonl"}) {
        CHECK(test::slurp(world.dir / "a" / f) == test::slurp(world.dir / "b" / f));
    }

    // The manifest's embedded config reruns the experiment.
    auto manifest = json::parse(test::slurp(world.dir / "a" / "manifest.json"));
    manifest["config"]["output_dir"] = (world.dir / "c").string();
    run_experiment(parse_experiment_config(manifest, "/"), {true});
    CHECK(test::slurp(world.dir / "a" / "report_meld.json") == test::slurp(world.dir / "c" / "report_meld.json"));
}

TEST_CASE("mixed run uses the unified space and evaluates every source") {
    SmallWorld world;
    auto j = world.mix("mix");
    j["proportion"] = "1/2";
    const auto config = world.config(j);
    const auto result = run_experiment(config, {true});
    CHECK(result.reports.size() == 2);
    CHECK(result.reports.at("meld").total > 0);
    const auto train = read_records(config.output_dir / "train.jsonl");
    const auto unified = load_label_mapping(*config.mapping_path).unified_space();
    for (const auto& r : train) {
        CHECK(unified.contains(*r.completion));
        CHECK(r.prompt.find("{neutral, joy, sadness, anger, fear, disgust, surprise}") != std::string::npos);
    }
    const auto& counts = result.manifest.stages[1].counts;
    CHECK(counts["dialogues"] == 12);  // ceil(12/2) from each of two sources
}

TEST_CASE("ablations") {
    SmallWorld world;
    auto j = world.single("iemocap", "zero");
    j["ablation"] = "zero_shot";
    const auto zero = world.config(j);
    const auto r = run_experiment(zero, {true});
    CHECK_FALSE(std::filesystem::exists(zero.output_dir / "train.jsonl"));
    CHECK_FALSE(std::filesystem::exists(zero.output_dir / "hits_iemocap.jsonl"));
    for (const auto& rec : read_records(zero.output_dir / "infer_iemocap.jsonl")) {
        CHECK(rec.prompt.find(kExamplesHeader) == std::string::npos);
        CHECK(rec.metadata.k_rendered == 0);
    }
    // Without examples the mock has nothing to vote on.
    CHECK(r.reports.at("iemocap").invalid_count == r.reports.at("iemocap").total);

    j["ablation"] = "no_examples";
    j["output_dir"] = "noex";
    const auto noex = world.config(j);
    run_experiment(noex);
    CHECK(std::filesystem::exists(noex.output_dir / "train.jsonl"));

    j["ablation"] = "no_tuning";
    j.erase("k");
    j["output_dir"] = "notune";
    const auto notune = world.config(j);
    run_experiment(notune);
    CHECK_FALSE(std::filesystem::exists(notune.output_dir / "train.jsonl"));
    CHECK(read_records(notune.output_dir / "infer_iemocap.jsonl").front().metadata.k_rendered > 0);
}

TEST_CASE("stage failures are recorded in the manifest") {
    SmallWorld world;
    auto j = world.single("iemocap", "broken");
    j["datasets"][0]["test_vectors"] = "meld_train.bin";  // wrong row count
    const auto config = world.config(j);
    CHECK_THROWS_AS(run_experiment(config), Error);
    const auto manifest = json::parse(test::slurp(config.output_dir / "manifest.json"));
    REQUIRE(manifest["errors"].size() == 1);
    CHECK(manifest["errors"][0]["stage"] == "retrieve");
}

TEST_CASE("sweep expansion") {
    const json base{{"name", "base"}, {"k", 5}, {"output_dir", "x"}};
    const std::vector<SweepAxis> axes{SweepAxis::parse("k=1..3"), SweepAxis::parse("ordering=similar_first, random")};
    const auto points = expand_sweep(base, axes, "/tmp/sweep");
    REQUIRE(points.size() == 6);
    CHECK(points[0].label == "k=1,ordering=similar_first");
    CHECK(points[5].config["k"] == 3);
    CHECK(points[5].config["ordering"]["kind"] == "random");
    CHECK(points[0].config["output_dir"] == "/tmp/sweep/" + points[0].dir_name);
    CHECK(points[0].dir_name.find('=') == std::string::npos);
    std::set<std::string> dirs;
    for (const auto& p : points) dirs.insert(p.dir_name);
    CHECK(dirs.size() == 6);

    const auto prop = expand_sweep(base, std::vector<SweepAxis>{SweepAxis::parse("proportion=1/64,1")}, "/s");
    CHECK(prop[0].config["proportion"] == "1/64");
    CHECK(prop[0].dir_name.find('/') == std::string::npos);
    const auto abl = expand_sweep(base, std::vector<SweepAxis>{SweepAxis::parse("ablation=zero_shot")}, "/s");
    CHECK(abl[0].config["k"] == 0);
    CHECK(code_of([] { SweepAxis::parse("colour=red"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { SweepAxis::parse("k=5..2"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("ordering sweep changes order but not the example multiset") {
    SmallWorld world;
    std::vector<std::vector<std::vector<std::size_t>>> by_ordering;
    for (const char* ordering : {"similar_first", "similar_last", "random"}) {
        auto j = world.single("meld", std::string("ord_") + ordering);
        j["ordering"] = ordering;
        j["retriever"] = "bm25";
        const auto config = world.config(j);
        run_experiment(config);
        std::vector<std::vector<std::size_t>> ids;
        for (const auto& r : read_records(config.output_dir / "infer_meld.jsonl")) ids.push_back(r.metadata.example_ids);
        by_ordering.push_back(ids);
    }
    bool changed = false;
    for (std::size_t q = 0; q < by_ordering[0].size(); ++q) {
        auto a = by_ordering[0][q];
        changed = changed || a != by_ordering[1][q];
        std::sort(a.begin(), a.end());
        for (std::size_t o = 1; o < 3; ++o) {
            auto b = by_ordering[o][q];
            std::sort(b.begin(), b.end());
            CHECK(a == b);
        }
    }
    CHECK(changed);
}

TEST_CASE("report tables") {
    SmallWorld world;
    for (int k : {1, 3}) {
        auto j = world.single("iemocap", "sweep/k" + std::to_string(k));
        j["name"] = "k=" + std::to_string(k);
        j["k"] = k;
        run_experiment(world.config(j), {true});
    }
    const auto table = format_report(world.dir / "sweep", "table");
    CHECK(table.find("iemocap") != std::string::npos);
    CHECK(table.find("k=1") != std::string::npos);
    CHECK(table.find("100.00") != std::string::npos);
    const auto csv = format_report(world.dir / "sweep", "csv");
    CHECK(csv.rfind("run,dataset,weighted_f1,invalid_count,total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(code_of([&] { format_report(world.dir / "sweep", "xml"); }) == ErrorCode::InvalidConfig);
}
