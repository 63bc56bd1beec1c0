#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"

namespace erc {

/// Rendering of an invalid prediction in reports.
inline constexpr std::string_view kInvalidLabel = "INVALID";

struct Prediction {
    std::string query_id;
    std::string raw_text;
    std::optional<std::string> normalized;  // nullopt = INVALID
};

struct GoldLabel {
    std::string query_id;
    std::string label;
};

/// Trim, lowercase, strip surrounding punctuation; an exact label match wins,
/// otherwise a label occurring as a whole word is accepted only if it is the
/// only label that occurs.
std::optional<std::string> normalize_prediction(std::string_view raw, const LabelSpace& space);

Prediction make_prediction(std::string query_id, std::string raw_text, const LabelSpace& space);

struct EvalReport {
    std::vector<std::string> labels;
    /// labels.size() rows (gold) by labels.size() + 1 columns (predicted; last = INVALID).
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> per_class_f1;
    std::vector<std::size_t> support;
    double weighted_f1 = 0.0;
    std::size_t invalid_count = 0;
    std::size_t total = 0;
};

/// Query id sets must match exactly (QueryMismatch otherwise). Classes with
/// P + R = 0 get F1 = 0; INVALID counts against recall only.
EvalReport evaluate(std::span<const GoldLabel> golds, std::span<const Prediction> preds, const LabelSpace& space);

std::vector<GoldLabel> golds_from_corpus(const Corpus& corpus);

/// Metrics rounded to 4 decimals.
nlohmann::json report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

/// Line-delimited {query_id, raw_text}.
void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path, const LabelSpace& space);

}  // namespace erc
