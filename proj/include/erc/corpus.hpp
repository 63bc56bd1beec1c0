#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace erc {

enum class Split { Train, Val, Test };

Split parse_split(std::string_view name);
std::string_view to_string(Split split);

/// One conversational turn with its gold emotion.
struct Utterance {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    std::string speaker;
    std::string text;
    std::string label;

    bool operator==(const Utterance&) const = default;
};

/// Ordered, duplicate-free set of lowercase emotion labels. The order is the
/// order candidates are listed in prompts and rows/columns in reports.
class LabelSpace {
public:
    LabelSpace() = default;
    LabelSpace(std::string dataset_id, std::vector<std::string> labels);

    const std::string& dataset_id() const { return dataset_id_; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    bool contains(std::string_view label) const { return index_of(label).has_value(); }
    std::optional<std::size_t> index_of(std::string_view label) const;

    bool operator==(const LabelSpace& other) const {
        return dataset_id_ == other.dataset_id_ && labels_ == other.labels_;
    }

private:
    std::string dataset_id_;
    std::vector<std::string> labels_;
};

/// Label sets for the three benchmark datasets, in their customary listing order.
LabelSpace builtin_label_space(std::string_view dataset_id);

/// Reads `{"dataset_id": ..., "labels": [...]}`.
LabelSpace load_label_space(const std::filesystem::path& path);

struct Dialogue {
    std::string id;
    std::vector<Utterance> turns;  // sorted by turn_index, contiguous from 0

    bool operator==(const Dialogue&) const = default;
};

/// A validated split of one dataset. Immutable after construction.
class Corpus {
public:
    Corpus(std::string dataset_id, Split split, LabelSpace label_space, std::vector<Dialogue> dialogues);

    const std::string& dataset_id() const { return dataset_id_; }
    Split split() const { return split_; }
    const LabelSpace& label_space() const { return label_space_; }
    const std::vector<Dialogue>& dialogues() const { return dialogues_; }
    std::size_t utterance_count() const { return utterance_count_; }
    const Dialogue* find(std::string_view dialogue_id) const;

    bool operator==(const Corpus& other) const {
        return dataset_id_ == other.dataset_id_ && split_ == other.split_ &&
               label_space_ == other.label_space_ && dialogues_ == other.dialogues_;
    }

private:
    std::string dataset_id_;
    Split split_;
    LabelSpace label_space_;
    std::vector<Dialogue> dialogues_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t utterance_count_ = 0;
};

/// Parses line-delimited utterance records. Dialogues appear in order of
/// first occurrence; turns are ordered by turn_index regardless of file order.
Corpus parse_corpus(std::istream& in, const std::string& dataset_id, Split split, const LabelSpace& space);
Corpus parse_corpus(const std::filesystem::path& path, const std::string& dataset_id, Split split,
                    const LabelSpace& space);
Corpus parse_corpus(const std::filesystem::path& path, const std::string& dataset_id, Split split);

/// Canonical store: a header line `{"corpus": {dataset_id, split, labels}}`
/// followed by one utterance record per line in dialogue/turn order.
void write_canonical(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_canonical(const std::filesystem::path& path);
bool is_canonical(const std::filesystem::path& path);

struct CorpusStats {
    std::size_t dialogues = 0;
    std::size_t utterances = 0;
    std::vector<std::pair<std::string, std::size_t>> per_label;  // label space order

    bool operator==(const CorpusStats&) const = default;
};

CorpusStats corpus_stats(const Corpus& corpus);

/// (dataset_id, source_label) -> unified label.
class LabelMapping {
public:
    LabelMapping(std::map<std::pair<std::string, std::string>, std::string> entries, LabelSpace unified);

    const LabelSpace& unified_space() const { return unified_; }
    const std::map<std::pair<std::string, std::string>, std::string>& entries() const { return entries_; }
    std::optional<std::string> lookup(std::string_view dataset_id, std::string_view label) const;

    /// Identity over a single label space; targets keep their names.
    static LabelMapping identity(const LabelSpace& space);

private:
    std::map<std::pair<std::string, std::string>, std::string> entries_;
    LabelSpace unified_;
};

/// Reads `{"unified_labels": [...], "entries": [{dataset_id, source, target}, ...]}`.
LabelMapping load_label_mapping(const std::filesystem::path& path);

/// Rewrites every label through `mapping`; structure, speakers and texts are kept.
Corpus apply_mapping(const Corpus& corpus, const LabelMapping& mapping);

}  // namespace erc
