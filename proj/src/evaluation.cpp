#include "erc/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "erc/error.hpp"
#include "erc/retrieval.hpp"
#include "erc/text.hpp"

namespace erc {

using nlohmann::json;

namespace {

bool is_ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

std::string_view strip_punct_and_space(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    auto strip = [](char c) { return is_ascii_punct(c) || c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    while (begin < end && strip(s[begin])) ++begin;
    while (end > begin && strip(s[end - 1])) --end;
    return s.substr(begin, end - begin);
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

}  // namespace

std::optional<std::string> normalize_prediction(std::string_view raw, const LabelSpace& space) {
    const std::string lowered = text::to_lower(text::trim(raw));
    const std::string_view cleaned = strip_punct_and_space(lowered);
    if (space.contains(cleaned)) return std::string(cleaned);

    const auto tokens = text::tokenize(cleaned);
    std::optional<std::string> found;
    for (const auto& label : space.labels()) {
        for (const auto& token : tokens) {
            if (token == label) {
                if (found) return std::nullopt;  // more than one label mentioned
                found = label;
                break;
            }
        }
    }
    return found;
}

Prediction make_prediction(std::string query_id, std::string raw_text, const LabelSpace& space) {
    auto normalized = normalize_prediction(raw_text, space);
    return Prediction{std::move(query_id), std::move(raw_text), std::move(normalized)};
}

EvalReport evaluate(std::span<const GoldLabel> golds, std::span<const Prediction> preds, const LabelSpace& space) {
    const std::size_t m = space.size();
    std::unordered_map<std::string, std::size_t> gold_index;
    gold_index.reserve(golds.size());
    for (const auto& g : golds) {
        auto idx = space.index_of(g.label);
        if (!idx) throw Error(ErrorCode::UnknownLabel, "gold '" + g.label + "' for " + g.query_id);
        if (!gold_index.emplace(g.query_id, *idx).second) {
            throw Error(ErrorCode::QueryMismatch, "duplicate gold query " + g.query_id);
        }
    }
    if (preds.size() != golds.size()) {
        throw Error(ErrorCode::QueryMismatch, std::to_string(golds.size()) + " golds vs " +
                                                  std::to_string(preds.size()) + " predictions");
    }

    EvalReport report;
    report.labels = space.labels();
    report.confusion.assign(m, std::vector<std::size_t>(m + 1, 0));
    std::set<std::string_view> seen;
    for (const auto& p : preds) {
        auto it = gold_index.find(p.query_id);
        if (it == gold_index.end()) throw Error(ErrorCode::QueryMismatch, "prediction for unknown query " + p.query_id);
        if (!seen.insert(p.query_id).second) throw Error(ErrorCode::QueryMismatch, "duplicate prediction " + p.query_id);
        std::size_t col = m;
        if (p.normalized) {
            auto idx = space.index_of(*p.normalized);
            if (idx) col = *idx;
        }
        if (col == m) ++report.invalid_count;
        ++report.confusion[it->second][col];
    }
    report.total = preds.size();

    report.precision.assign(m, 0.0);
    report.recall.assign(m, 0.0);
    report.per_class_f1.assign(m, 0.0);
    report.support.assign(m, 0);
    double weighted = 0.0;
    std::size_t total_support = 0;
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t predicted = 0;
        for (std::size_t g = 0; g < m; ++g) predicted += report.confusion[g][c];
        for (std::size_t p = 0; p <= m; ++p) report.support[c] += report.confusion[c][p];
        const double tp = static_cast<double>(report.confusion[c][c]);
        const double precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
        const double recall = report.support[c] > 0 ? tp / static_cast<double>(report.support[c]) : 0.0;
        report.precision[c] = precision;
        report.recall[c] = recall;
        report.per_class_f1[c] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        weighted += static_cast<double>(report.support[c]) * report.per_class_f1[c];
        total_support += report.support[c];
    }
    report.weighted_f1 = total_support > 0 ? weighted / static_cast<double>(total_support) : 0.0;
    return report;
}

std::vector<GoldLabel> golds_from_corpus(const Corpus& corpus) {
    std::vector<GoldLabel> golds;
    golds.reserve(corpus.utterance_count());
    for (const auto& dialogue : corpus.dialogues()) {
        for (const auto& u : dialogue.turns) golds.push_back(GoldLabel{make_query_id(dialogue.id, u.turn_index), u.label});
    }
    return golds;
}

json report_to_json(const EvalReport& report) {
    json per_class = json::object();
    for (std::size_t c = 0; c < report.labels.size(); ++c) {
        per_class[report.labels[c]] = {{"precision", round4(report.precision[c])},
                                       {"recall", round4(report.recall[c])},
                                       {"f1", round4(report.per_class_f1[c])},
                                       {"support", report.support[c]}};
    }
    auto columns = report.labels;
    columns.emplace_back(kInvalidLabel);
    return json{{"labels", report.labels},
                {"confusion", {{"rows", report.labels}, {"columns", columns}, {"matrix", report.confusion}}},
                {"per_class", std::move(per_class)},
                {"weighted_f1", round4(report.weighted_f1)},
                {"invalid_count", report.invalid_count},
                {"total", report.total}};
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& p : preds) out << json{{"query_id", p.query_id}, {"raw_text", p.raw_text}}.dump() << '\n';
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path, const LabelSpace& space) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<Prediction> preds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            preds.push_back(make_prediction(j.at("query_id").get<std::string>(), j.at("raw_text").get<std::string>(), space));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRecord, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return preds;
}

}  // namespace erc
