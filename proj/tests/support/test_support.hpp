#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"
#include "erc/random.hpp"

namespace erc::test {

inline std::filesystem::path source_dir() { return ERC_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& dataset, const std::string& split) {
    return source_dir() / "data" / "fixtures" / dataset / (split + ".jsonl");
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("erc-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; }

/// Random corpus: `dialogues` dialogues of 1..max_turns turns, words drawn
/// from a small vocabulary so that lexical overlap (and ties) are common.
inline Corpus random_corpus(Rng& rng, const LabelSpace& space, std::size_t dialogues, std::size_t max_turns,
                            Split split = Split::Train, const std::string& prefix = "d") {
    static const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta",
                                                "iota",  "kappa", "lam",  "mu",    "nu",  "xi",   "omi", "pi"};
    static const std::vector<std::string> speakers{"A", "B", "C"};
    std::vector<Dialogue> out;
    for (std::size_t d = 0; d < dialogues; ++d) {
        Dialogue dialogue;
        dialogue.id = prefix + std::to_string(d);
        const std::size_t turns = 1 + rng.below(max_turns);
        for (std::size_t t = 0; t < turns; ++t) {
            std::string text;
            const std::size_t words = 1 + rng.below(6);
            for (std::size_t w = 0; w < words; ++w) {
                if (!text.empty()) text += ' ';
                text += vocab[rng.below(vocab.size())];
            }
            dialogue.turns.push_back(Utterance{dialogue.id, t, speakers[rng.below(speakers.size())], text,
                                               space.labels()[rng.below(space.size())]});
        }
        out.push_back(std::move(dialogue));
    }
    return Corpus(space.dataset_id(), split, space, std::move(out));
}

/// Writes a corpus as raw line-delimited records.
inline void write_raw(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& d : corpus.dialogues()) {
        for (const auto& u : d.turns) {
            out << nlohmann::json{{"dialogue_id", u.dialogue_id}, {"turn_index", u.turn_index}, {"speaker", u.speaker},
                                  {"text", u.text}, {"label", u.label}}
                       .dump()
                << '\n';
        }
    }
}

/// Golden comparison; ERC_UPDATE_GOLDEN=1 rewrites the file instead.
inline bool matches_golden(const std::string& name, const std::string& actual) {
    const auto path = source_dir() / "tests" / "golden" / name;
    if (const char* update = std::getenv("ERC_UPDATE_GOLDEN"); update != nullptr && std::string(update) == "1") {
        spit(path, actual);
        return true;
    }
    return std::filesystem::exists(path) && slurp(path) == actual;
}

}  // namespace erc::test
