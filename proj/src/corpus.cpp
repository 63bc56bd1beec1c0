#include "erc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "erc/error.hpp"
#include "erc/text.hpp"

namespace erc {

using nlohmann::json;

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val" || name == "dev") return Split::Val;
    if (name == "test") return Split::Test;
    throw Error(ErrorCode::InvalidConfig, "unknown split '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

// ---------------------------------------------------------------------------
// LabelSpace

LabelSpace::LabelSpace(std::string dataset_id, std::vector<std::string> labels)
    : dataset_id_(std::move(dataset_id)) {
    if (labels.size() < 2) {
        throw Error(ErrorCode::InvalidLabelSpace,
                    "label space '" + dataset_id_ + "' needs at least 2 labels");
    }
    std::set<std::string> seen;
    labels_.reserve(labels.size());
    for (auto& label : labels) {
        auto lowered = text::to_lower(text::trim(label));
        if (lowered.empty()) {
            throw Error(ErrorCode::InvalidLabelSpace, "empty label in space '" + dataset_id_ + "'");
        }
        if (!seen.insert(lowered).second) {
            throw Error(ErrorCode::InvalidLabelSpace,
                        "duplicate label '" + lowered + "' in space '" + dataset_id_ + "'");
        }
        labels_.push_back(std::move(lowered));
    }
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == label) return i;
    }
    return std::nullopt;
}

LabelSpace builtin_label_space(std::string_view dataset_id) {
    if (dataset_id == "iemocap") {
        return LabelSpace("iemocap", {"happy", "sad", "neutral", "angry", "excited", "frustrated"});
    }
    if (dataset_id == "meld") {
        return LabelSpace("meld", {"anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise"});
    }
    if (dataset_id == "emorynlp") {
        return LabelSpace("emorynlp", {"neutral", "joyful", "peaceful", "powerful", "scared", "mad", "sad"});
    }
    throw Error(ErrorCode::UnknownDataset, "no built-in label space for '" + std::string(dataset_id) + "'");
}

namespace {

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
    }
}

LabelSpace label_space_from_json(const json& j, const std::string& where) {
    try {
        return LabelSpace(j.at("dataset_id").get<std::string>(), j.at("labels").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
    }
}

}  // namespace

LabelSpace load_label_space(const std::filesystem::path& path) {
    return label_space_from_json(read_json_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::string dataset_id, Split split, LabelSpace label_space, std::vector<Dialogue> dialogues)
    : dataset_id_(std::move(dataset_id)),
      split_(split),
      label_space_(std::move(label_space)),
      dialogues_(std::move(dialogues)) {
    index_.reserve(dialogues_.size());
    for (std::size_t d = 0; d < dialogues_.size(); ++d) {
        const auto& dialogue = dialogues_[d];
        if (!index_.emplace(dialogue.id, d).second) {
            throw Error(ErrorCode::MalformedRecord, "dialogue '" + dialogue.id + "' listed twice");
        }
        for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
            const auto& u = dialogue.turns[t];
            if (u.dialogue_id != dialogue.id) {
                throw Error(ErrorCode::MalformedRecord,
                            "utterance of '" + u.dialogue_id + "' filed under '" + dialogue.id + "'");
            }
            if (u.turn_index != t) {
                if (t > 0 && u.turn_index == dialogue.turns[t - 1].turn_index) {
                    throw Error(ErrorCode::DuplicateTurn,
                                dialogue.id + " turn " + std::to_string(u.turn_index));
                }
                throw Error(ErrorCode::GapError, dialogue.id + ": expected turn " + std::to_string(t) +
                                                     ", found " + std::to_string(u.turn_index));
            }
            if (text::trim(u.text).empty()) {
                throw Error(ErrorCode::MalformedRecord, dialogue.id + " turn " + std::to_string(t) + ": empty text");
            }
            if (!label_space_.contains(u.label)) {
                throw Error(ErrorCode::UnknownLabel, "'" + u.label + "' in " + dialogue.id);
            }
        }
        utterance_count_ += dialogue.turns.size();
    }
}

const Dialogue* Corpus::find(std::string_view dialogue_id) const {
    auto it = index_.find(std::string(dialogue_id));
    return it == index_.end() ? nullptr : &dialogues_[it->second];
}

namespace {

std::string field_string(const json& record, const char* key, std::size_t line_no) {
    auto it = record.find(key);
    if (it == record.end() || !it->is_string()) {
        throw Error(ErrorCode::MalformedRecord,
                    "line " + std::to_string(line_no) + ": missing or non-string '" + key + "'");
    }
    return it->get<std::string>();
}

Utterance utterance_from_json(const json& record, std::size_t line_no) {
    if (!record.is_object()) {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": not an object");
    }
    Utterance u;
    u.dialogue_id = field_string(record, "dialogue_id", line_no);
    auto turn = record.find("turn_index");
    if (turn == record.end() || !turn->is_number_integer() || turn->get<long long>() < 0) {
        throw Error(ErrorCode::MalformedRecord,
                    "line " + std::to_string(line_no) + ": turn_index must be a non-negative integer");
    }
    u.turn_index = turn->get<std::size_t>();
    u.speaker = field_string(record, "speaker", line_no);
    u.text = field_string(record, "text", line_no);
    u.label = text::to_lower(text::trim(field_string(record, "label", line_no)));
    if (text::trim(u.text).empty()) {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": empty text");
    }
    return u;
}

json utterance_to_json(const Utterance& u) {
    return json{{"dialogue_id", u.dialogue_id},
                {"turn_index", u.turn_index},
                {"speaker", u.speaker},
                {"text", u.text},
                {"label", u.label}};
}

// Groups utterances by dialogue in order of first appearance, sorts each by
// turn, and rejects duplicates. Contiguity is checked by the Corpus itself.
std::vector<Dialogue> group_dialogues(std::vector<Utterance> utterances) {
    std::vector<Dialogue> dialogues;
    std::unordered_map<std::string, std::size_t> slot;
    for (auto& u : utterances) {
        auto [it, inserted] = slot.emplace(u.dialogue_id, dialogues.size());
        if (inserted) dialogues.push_back(Dialogue{u.dialogue_id, {}});
        dialogues[it->second].turns.push_back(std::move(u));
    }
    for (auto& dialogue : dialogues) {
        std::stable_sort(dialogue.turns.begin(), dialogue.turns.end(),
                         [](const Utterance& a, const Utterance& b) { return a.turn_index < b.turn_index; });
        for (std::size_t t = 1; t < dialogue.turns.size(); ++t) {
            if (dialogue.turns[t].turn_index == dialogue.turns[t - 1].turn_index) {
                throw Error(ErrorCode::DuplicateTurn,
                            dialogue.id + " turn " + std::to_string(dialogue.turns[t].turn_index));
            }
        }
    }
    return dialogues;
}

}  // namespace

Corpus parse_corpus(std::istream& in, const std::string& dataset_id, Split split, const LabelSpace& space) {
    std::vector<Utterance> utterances;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception&) {
            throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": invalid JSON");
        }
        auto u = utterance_from_json(record, line_no);
        if (!space.contains(u.label)) {
            throw Error(ErrorCode::UnknownLabel, "'" + u.label + "' at line " + std::to_string(line_no));
        }
        utterances.push_back(std::move(u));
    }
    return Corpus(dataset_id, split, space, group_dialogues(std::move(utterances)));
}

Corpus parse_corpus(const std::filesystem::path& path, const std::string& dataset_id, Split split,
                    const LabelSpace& space) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return parse_corpus(in, dataset_id, split, space);
}

Corpus parse_corpus(const std::filesystem::path& path, const std::string& dataset_id, Split split) {
    return parse_corpus(path, dataset_id, split, builtin_label_space(dataset_id));
}

void write_canonical(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    json header{{"corpus",
                 {{"dataset_id", corpus.dataset_id()},
                  {"split", std::string(to_string(corpus.split()))},
                  {"label_space", corpus.label_space().dataset_id()},
                  {"labels", corpus.label_space().labels()}}}};
    out << header.dump() << '\n';
    for (const auto& dialogue : corpus.dialogues()) {
        for (const auto& u : dialogue.turns) out << utterance_to_json(u).dump() << '\n';
    }
}

bool is_canonical(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string first;
    if (!in || !std::getline(in, first)) return false;
    auto j = json::parse(first, nullptr, false);
    return j.is_object() && j.contains("corpus");
}

Corpus read_canonical(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::string first;
    if (!std::getline(in, first)) throw Error(ErrorCode::MalformedRecord, path.string() + ": empty store");
    auto header = json::parse(first, nullptr, false);
    if (!header.is_object() || !header.contains("corpus")) {
        throw Error(ErrorCode::MalformedRecord, path.string() + ": missing canonical header");
    }
    const auto& meta = header["corpus"];
    try {
        auto dataset_id = meta.at("dataset_id").get<std::string>();
        auto space_id = meta.value("label_space", dataset_id);
        LabelSpace space(space_id, meta.at("labels").get<std::vector<std::string>>());
        return parse_corpus(in, dataset_id, parse_split(meta.at("split").get<std::string>()), space);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
    }
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.dialogues = corpus.dialogues().size();
    stats.utterances = corpus.utterance_count();
    std::vector<std::size_t> counts(corpus.label_space().size(), 0);
    for (const auto& dialogue : corpus.dialogues()) {
        for (const auto& u : dialogue.turns) ++counts[*corpus.label_space().index_of(u.label)];
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        stats.per_label.emplace_back(corpus.label_space().labels()[i], counts[i]);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// LabelMapping

LabelMapping::LabelMapping(std::map<std::pair<std::string, std::string>, std::string> entries, LabelSpace unified)
    : unified_(std::move(unified)) {
    for (auto& [key, target] : entries) {
        auto lowered = text::to_lower(text::trim(target));
        if (!unified_.contains(lowered)) {
            throw Error(ErrorCode::UnknownLabel,
                        "mapping target '" + lowered + "' is not in the unified label space");
        }
        entries_.emplace(std::pair{key.first, text::to_lower(text::trim(key.second))}, std::move(lowered));
    }
}

std::optional<std::string> LabelMapping::lookup(std::string_view dataset_id, std::string_view label) const {
    auto it = entries_.find(std::pair{std::string(dataset_id), std::string(label)});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

LabelMapping LabelMapping::identity(const LabelSpace& space) {
    std::map<std::pair<std::string, std::string>, std::string> entries;
    for (const auto& label : space.labels()) entries.emplace(std::pair{space.dataset_id(), label}, label);
    return LabelMapping(std::move(entries), space);
}

LabelMapping load_label_mapping(const std::filesystem::path& path) {
    auto j = read_json_file(path);
    try {
        LabelSpace unified(j.value("unified_id", std::string("unified")),
                           j.at("unified_labels").get<std::vector<std::string>>());
        std::map<std::pair<std::string, std::string>, std::string> entries;
        for (const auto& e : j.at("entries")) {
            std::pair key{e.at("dataset_id").get<std::string>(), e.at("source").get<std::string>()};
            if (!entries.emplace(key, e.at("target").get<std::string>()).second) {
                throw Error(ErrorCode::MalformedRecord,
                            path.string() + ": duplicate entry for (" + key.first + ", " + key.second + ")");
            }
        }
        return LabelMapping(std::move(entries), std::move(unified));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
    }
}

Corpus apply_mapping(const Corpus& corpus, const LabelMapping& mapping) {
    std::vector<Dialogue> dialogues = corpus.dialogues();
    for (auto& dialogue : dialogues) {
        for (auto& u : dialogue.turns) {
            auto target = mapping.lookup(corpus.dataset_id(), u.label);
            if (!target) {
                throw Error(ErrorCode::UnmappedLabel, "(" + corpus.dataset_id() + ", " + u.label + ")");
            }
            u.label = std::move(*target);
        }
    }
    return Corpus(corpus.dataset_id(), corpus.split(), mapping.unified_space(), std::move(dialogues));
}

}  // namespace erc
