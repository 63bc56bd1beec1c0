// Writes the synthetic split fixtures under data/fixtures/<dataset>/.
// Split shapes (dialogue and utterance counts, class counts) mirror the
// public benchmark statistics; the text is generated, with label-correlated
// cue words so that lexical and dense retrieval have signal to find.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"
#include "erc/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SplitShape {
    const char* split;
    std::size_t dialogues;
    std::size_t utterances;
};

struct DatasetShape {
    const char* id;
    SplitShape splits[3];
    std::vector<const char*> speakers;
    std::size_t min_speakers;
    std::size_t max_speakers;
    std::vector<double> prior;  // aligned with the built-in label order
};

const std::vector<DatasetShape>& shapes() {
    static const std::vector<DatasetShape> all{
        {"iemocap",
         {{"train", 100, 4778}, {"val", 20, 980}, {"test", 31, 1622}},
         {"M", "F"},
         2,
         2,
         // happy sad neutral angry excited frustrated
         {0.09, 0.15, 0.23, 0.14, 0.14, 0.25}},
        {"meld",
         {{"train", 1038, 9989}, {"val", 114, 1109}, {"test", 280, 2610}},
         {"Ross", "Rachel", "Monica", "Chandler", "Joey", "Phoebe", "Gunther", "Janice"},
         2,
         5,
         // anger disgust fear joy neutral sadness surprise
         {0.11, 0.03, 0.03, 0.17, 0.47, 0.07, 0.12}},
        {"emorynlp",
         {{"train", 713, 9934}, {"val", 99, 1344}, {"test", 85, 1328}},
         {"Ross", "Rachel", "Monica", "Chandler", "Joey", "Phoebe", "Carol", "Mike"},
         2,
         5,
         // neutral joyful peaceful powerful scared mad sad
         {0.32, 0.22, 0.09, 0.09, 0.13, 0.10, 0.05}},
    };
    return all;
}

const std::map<std::string, std::vector<const char*>>& cue_words() {
    static const std::map<std::string, std::vector<const char*>> cues{
        {"happy", {"glad", "great", "lovely", "smile", "nice", "wonderful", "fun", "pleased"}},
        {"joy", {"glad", "great", "lovely", "smile", "awesome", "wonderful", "fun", "yay"}},
        {"joyful", {"glad", "great", "lovely", "laugh", "awesome", "wonderful", "fun", "yay"}},
        {"excited", {"wow", "amazing", "cannot", "wait", "incredible", "finally", "yes", "thrilled"}},
        {"surprise", {"wow", "really", "what", "seriously", "unbelievable", "whoa", "no", "way"}},
        {"sad", {"miss", "sorry", "lonely", "cry", "lost", "hurts", "gone", "tears"}},
        {"sadness", {"miss", "sorry", "lonely", "cry", "lost", "hurts", "gone", "tears"}},
        {"neutral", {"okay", "so", "then", "maybe", "know", "today", "said", "alright"}},
        {"angry", {"stop", "hate", "enough", "stupid", "shut", "damn", "ridiculous", "furious"}},
        {"anger", {"stop", "hate", "enough", "stupid", "shut", "damn", "ridiculous", "furious"}},
        {"mad", {"stop", "hate", "enough", "stupid", "shut", "damn", "ridiculous", "furious"}},
        {"frustrated", {"again", "why", "nothing", "works", "tired", "ugh", "whatever", "forms"}},
        {"disgust", {"gross", "ew", "yuck", "disgusting", "nasty", "smell", "sick", "eww"}},
        {"fear", {"scared", "afraid", "help", "careful", "danger", "nervous", "worried", "hide"}},
        {"scared", {"scared", "afraid", "help", "careful", "danger", "nervous", "worried", "hide"}},
        {"peaceful", {"calm", "quiet", "relax", "fine", "gentle", "rest", "easy", "warm"}},
        {"powerful", {"proud", "strong", "confident", "won", "best", "sure", "control", "ready"}},
    };
    return cues;
}

const std::vector<const char*> kFiller{
    "i",     "you",   "the",   "a",    "it",    "is",    "was",  "we",    "that", "this",  "to",
    "and",   "of",    "in",    "my",   "your",  "do",    "have", "just",  "what", "there", "here",
    "about", "think", "going", "been", "would", "could", "home", "work",  "time", "thing", "with",
    "for",   "he",    "she",   "they", "me",    "on",    "at",   "right", "now",  "well",  "like",
};

std::vector<std::size_t> dialogue_lengths(erc::Rng& rng, std::size_t dialogues, std::size_t utterances) {
    const double mean = static_cast<double>(utterances) / static_cast<double>(dialogues);
    std::vector<std::size_t> lengths(dialogues);
    std::size_t total = 0;
    for (auto& len : lengths) {
        // Uniform in [mean/2, 3*mean/2], at least 1.
        const auto lo = std::max<std::size_t>(1, static_cast<std::size_t>(mean / 2));
        const auto hi = std::max(lo, static_cast<std::size_t>(mean * 1.5));
        len = lo + rng.below(hi - lo + 1);
        total += len;
    }
    while (total != utterances) {
        auto& len = lengths[rng.below(dialogues)];
        if (total < utterances) {
            ++len;
            ++total;
        } else if (len > 1) {
            --len;
            --total;
        }
    }
    return lengths;
}

std::size_t draw(erc::Rng& rng, const std::vector<double>& weights) {
    const double u = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    double sum = 0.0;
    for (double w : weights) sum += w;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i] / sum;
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

bool chance(erc::Rng& rng, double p) { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53 < p; }

std::string utterance_text(erc::Rng& rng, const std::string& label, const erc::LabelSpace& space) {
    const auto& cues = cue_words().at(label);
    const std::size_t words = 3 + rng.below(10);
    std::string out;
    for (std::size_t w = 0; w < words; ++w) {
        const char* word;
        if (chance(rng, 0.3)) {
            word = cues[rng.below(cues.size())];
        } else if (chance(rng, 0.08)) {
            const auto& other = cue_words().at(space.labels()[rng.below(space.size())]);
            word = other[rng.below(other.size())];
        } else {
            word = kFiller[rng.below(kFiller.size())];
        }
        if (!out.empty()) out += ' ';
        out += word;
    }
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    out += chance(rng, 0.2) ? "?" : (chance(rng, 0.2) ? "!" : ".");
    return out;
}

void write_split(const DatasetShape& shape, const SplitShape& split, const fs::path& dir, std::uint64_t seed) {
    const auto space = erc::builtin_label_space(shape.id);
    erc::Rng rng(erc::mix_seed(seed, std::string(shape.id) + "/" + split.split));
    const auto lengths = dialogue_lengths(rng, split.dialogues, split.utterances);
    std::ofstream out(dir / (std::string(split.split) + ".jsonl"), std::ios::binary);
    for (std::size_t d = 0; d < split.dialogues; ++d) {
        const std::string dialogue_id = std::string(split.split) + "_" + std::to_string(d);
        const std::size_t n_speakers = shape.min_speakers + rng.below(shape.max_speakers - shape.min_speakers + 1);
        std::vector<const char*> cast(shape.speakers.begin(), shape.speakers.end());
        rng.partial_shuffle(std::span<const char*>(cast), n_speakers);
        cast.resize(n_speakers);

        // Each speaker's mood persists with some probability, so context and
        // nearby turns are informative.
        std::vector<std::size_t> mood(n_speakers);
        for (auto& m : mood) m = draw(rng, shape.prior);
        std::size_t speaker = 0;
        for (std::size_t t = 0; t < lengths[d]; ++t) {
            if (shape.max_speakers == 2) {
                speaker = t % 2;
            } else if (t > 0 && chance(rng, 0.8)) {
                speaker = (speaker + 1 + rng.below(n_speakers - 1)) % n_speakers;
            }
            if (!chance(rng, 0.65)) mood[speaker] = draw(rng, shape.prior);
            const auto& label = space.labels()[mood[speaker]];
            json record{{"dialogue_id", dialogue_id},
                        {"turn_index", t},
                        {"speaker", cast[speaker]},
                        {"text", utterance_text(rng, label, space)},
                        {"label", label}};
            out << record.dump() << '\n';
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate synthetic split fixtures"};
    fs::path out_dir = "data";
    std::uint64_t seed = 20240601;
    app.add_option("--out", out_dir, "Output root (fixtures/, labels/, mappings/)");
    app.add_option("--seed", seed, "Generator seed");
    CLI11_PARSE(app, argc, argv);

    for (const auto& shape : shapes()) {
        const auto dir = out_dir / "fixtures" / shape.id;
        fs::create_directories(dir);
        for (const auto& split : shape.splits) write_split(shape, split, dir, seed);

        fs::create_directories(out_dir / "labels");
        const auto space = erc::builtin_label_space(shape.id);
        std::ofstream labels(out_dir / "labels" / (std::string(shape.id) + ".json"));
        labels << json{{"dataset_id", shape.id}, {"labels", space.labels()}}.dump(2) << '\n';
    }

    const std::vector<std::string> unified{"neutral", "joy", "sadness", "anger", "fear", "disgust", "surprise"};
    const std::vector<std::tuple<const char*, const char*, const char*>> rows{
        {"iemocap", "happy", "joy"},         {"iemocap", "sad", "sadness"},    {"iemocap", "neutral", "neutral"},
        {"iemocap", "angry", "anger"},       {"iemocap", "excited", "joy"},    {"iemocap", "frustrated", "anger"},
        {"meld", "anger", "anger"},          {"meld", "disgust", "disgust"},   {"meld", "fear", "fear"},
        {"meld", "joy", "joy"},              {"meld", "neutral", "neutral"},   {"meld", "sadness", "sadness"},
        {"meld", "surprise", "surprise"},    {"emorynlp", "neutral", "neutral"}, {"emorynlp", "joyful", "joy"},
        {"emorynlp", "peaceful", "neutral"}, {"emorynlp", "powerful", "joy"},  {"emorynlp", "scared", "fear"},
        {"emorynlp", "mad", "anger"},        {"emorynlp", "sad", "sadness"},
    };
    json entries = json::array();
    for (const auto& [dataset, source, target] : rows) {
        entries.push_back({{"dataset_id", dataset}, {"source", source}, {"target", target}});
    }
    fs::create_directories(out_dir / "mappings");
    std::ofstream mapping(out_dir / "mappings" / "unified_example.json");
    mapping << json{{"unified_id", "unified"}, {"unified_labels", unified}, {"entries", entries}}.dump(2) << '\n';
    std::cout << "fixtures written under " << out_dir << '\n';
    return 0;
}
