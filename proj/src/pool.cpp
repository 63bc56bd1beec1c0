#include "erc/pool.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "erc/error.hpp"

namespace erc {

using nlohmann::json;

DemonstrationPool::DemonstrationPool(std::string dataset_id, LabelSpace label_space,
                                     std::vector<DemonstrationExample> examples)
    : dataset_id_(std::move(dataset_id)), label_space_(std::move(label_space)), examples_(std::move(examples)) {
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        const auto& ex = examples_[i];
        if (ex.example_id != i) {
            throw Error(ErrorCode::MalformedRecord, "example ids must be dense; position " + std::to_string(i) +
                                                        " holds id " + std::to_string(ex.example_id));
        }
        if (!label_space_.contains(ex.label)) {
            throw Error(ErrorCode::UnknownLabel, "'" + ex.label + "' on example " + std::to_string(i));
        }
        by_dialogue_[ex.dialogue_id].push_back(i);
    }
}

const DemonstrationExample& DemonstrationPool::at(std::size_t example_id) const {
    if (example_id >= examples_.size()) {
        throw Error(ErrorCode::UnknownExample, "example " + std::to_string(example_id));
    }
    return examples_[example_id];
}

std::span<const std::size_t> DemonstrationPool::ids_in_dialogue(const std::string& dialogue_id) const {
    auto it = by_dialogue_.find(dialogue_id);
    if (it == by_dialogue_.end()) return {};
    return it->second;
}

std::optional<std::size_t> DemonstrationPool::embedding_dim() const {
    if (!embeddings_) return std::nullopt;
    return embeddings_->dim();
}

const DenseMatrix& DemonstrationPool::embeddings() const {
    if (!embeddings_) throw Error(ErrorCode::MissingEmbedding, "pool '" + dataset_id_ + "' has no embeddings");
    return *embeddings_;
}

DemonstrationPool build_pool(const Corpus& train) {
    if (train.split() != Split::Train) {
        throw Error(ErrorCode::InvalidConfig, "demonstration pools are built from the train split only");
    }
    if (train.utterance_count() == 0) throw Error(ErrorCode::EmptyCorpus, "training corpus has no utterances");
    std::vector<DemonstrationExample> examples;
    examples.reserve(train.utterance_count());
    for (const auto& dialogue : train.dialogues()) {
        std::vector<Turn> history;
        for (const auto& u : dialogue.turns) {
            DemonstrationExample ex;
            ex.example_id = examples.size();
            ex.dialogue_id = dialogue.id;
            ex.context = history;
            ex.target_speaker = u.speaker;
            ex.target_text = u.text;
            ex.label = u.label;
            examples.push_back(std::move(ex));
            history.push_back(Turn{u.speaker, u.text});
        }
    }
    return DemonstrationPool(train.dataset_id(), train.label_space(), std::move(examples));
}

DemonstrationPool attach_embeddings(const DemonstrationPool& pool, const EmbeddingStore& store) {
    for (std::size_t id = 0; id < pool.size(); ++id) {
        if (!store.contains(id)) throw Error(ErrorCode::MissingVector, "example " + std::to_string(id));
    }
    const std::size_t dim = store.uniform_dim().value_or(0);
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "zero-length vectors");
    std::vector<float> values;
    values.reserve(pool.size() * dim);
    for (std::size_t id = 0; id < pool.size(); ++id) {
        auto row = store.at(id);
        values.insert(values.end(), row.begin(), row.end());
    }
    DemonstrationPool annotated = pool;
    annotated.embeddings_ = DenseMatrix(pool.size(), dim, std::move(values));
    return annotated;
}

namespace {

json example_to_json(const DemonstrationExample& ex) {
    json context = json::array();
    for (const auto& turn : ex.context) context.push_back({{"speaker", turn.speaker}, {"text", turn.text}});
    return json{{"example_id", ex.example_id},   {"dialogue_id", ex.dialogue_id},
                {"context", std::move(context)}, {"target_speaker", ex.target_speaker},
                {"target_text", ex.target_text}, {"label", ex.label}};
}

DemonstrationExample example_from_json(const json& j) {
    DemonstrationExample ex;
    ex.example_id = j.at("example_id").get<std::size_t>();
    ex.dialogue_id = j.at("dialogue_id").get<std::string>();
    for (const auto& turn : j.at("context")) {
        ex.context.push_back(Turn{turn.at("speaker").get<std::string>(), turn.at("text").get<std::string>()});
    }
    ex.target_speaker = j.at("target_speaker").get<std::string>();
    ex.target_text = j.at("target_text").get<std::string>();
    ex.label = j.at("label").get<std::string>();
    return ex;
}

}  // namespace

void save_pool(const DemonstrationPool& pool, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream meta(dir / "pool.json", std::ios::binary);
        if (!meta) throw Error(ErrorCode::Io, "cannot write " + (dir / "pool.json").string());
        json j{{"dataset_id", pool.dataset_id()},
               {"label_space", pool.label_space().dataset_id()},
               {"labels", pool.label_space().labels()},
               {"count", pool.size()}};
        meta << j.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "examples.jsonl", std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / "examples.jsonl").string());
        for (const auto& ex : pool.examples()) out << example_to_json(ex).dump() << '\n';
    }
    const auto vectors = dir / "embeddings.bin";
    if (pool.has_embeddings()) {
        const auto& m = pool.embeddings();
        EmbeddingStore store;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            auto row = m.row(i);
            store.set(i, std::vector<float>(row.begin(), row.end()));
        }
        write_embedding_store(store, vectors);
    } else {
        std::filesystem::remove(vectors);
    }
}

DemonstrationPool load_pool(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "pool.json");
    if (!meta_in) throw Error(ErrorCode::Io, "no pool.json in " + dir.string());
    std::vector<DemonstrationExample> examples;
    try {
        auto meta = json::parse(meta_in);
        auto dataset_id = meta.at("dataset_id").get<std::string>();
        LabelSpace space(meta.value("label_space", dataset_id), meta.at("labels").get<std::vector<std::string>>());
        std::ifstream in(dir / "examples.jsonl");
        if (!in) throw Error(ErrorCode::Io, "no examples.jsonl in " + dir.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            examples.push_back(example_from_json(json::parse(line)));
        }
        if (examples.size() != meta.at("count").get<std::size_t>()) {
            throw Error(ErrorCode::MalformedRecord, dir.string() + ": example count disagrees with pool.json");
        }
        DemonstrationPool pool(std::move(dataset_id), std::move(space), std::move(examples));
        if (std::filesystem::exists(dir / "embeddings.bin")) {
            return attach_embeddings(pool, load_embedding_store(dir / "embeddings.bin"));
        }
        return pool;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, dir.string() + ": " + e.what());
    }
}

}  // namespace erc
