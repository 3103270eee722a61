#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verlab/renderer.hpp"

namespace verlab::eval {

enum class AnswerKind { Extractive, Abstractive, Boolean, Numeric };

/// Per-sample scoring switch. Precision-only mirrors LongBench-Pro style scoring.
enum class MetricKind { F1, Precision };

std::string_view to_string(AnswerKind kind);
AnswerKind parse_answer_kind(std::string_view s);
std::string_view to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view s);

struct QASample {
    std::string id;
    std::string context;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<EvidenceSpan> gold_spans;
    AnswerKind answer_kind = AnswerKind::Extractive;
    MetricKind metric = MetricKind::F1;
    std::string dataset;

    /// Spans inside the context, non-empty, start < end.
    void validate() const;
};

struct RetrievalEval {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Character-level precision/recall/F1 of retrieved offsets against gold spans.
/// Whitespace characters of `context` are ignored on both sides.
RetrievalEval retrieval_prf(std::string_view context, std::span<const std::size_t> retrieved,
                            std::span<const EvidenceSpan> gold_spans);

/// Offsets covered by a set of half-open ranges, sorted and unique.
std::vector<std::size_t> offsets_from_spans(std::span<const EvidenceSpan> spans);

/// Lowercase, strip punctuation, drop articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);
std::vector<std::string> answer_tokens(std::string_view s);

struct TokenPRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

TokenPRF token_prf(std::string_view prediction, std::string_view gold);
/// Max over golds of bag-of-tokens F1.
double qa_f1(std::string_view prediction, std::span<const std::string> golds);
/// Max over golds of token precision.
double qa_precision(std::string_view prediction, std::span<const std::string> golds);
/// 1 if the normalized prediction equals any normalized gold.
int exact_match(std::string_view prediction, std::span<const std::string> golds);

/// Parses a number after trimming whitespace, a trailing '%' and trailing zeros.
std::optional<double> parse_numeric_answer(std::string_view s);
/// Relative tolerance 1e-6.
bool numeric_match(std::string_view prediction, std::string_view gold);

/// Score of one prediction under the sample's answer kind and metric switch.
double score_prediction(const QASample& sample, std::string_view prediction);

inline constexpr std::string_view kContextSeparator = "\n\n";

/// Groups of `group_size` samples share one concatenated context; spans are shifted.
std::vector<QASample> concat_contexts(std::span<const QASample> samples, std::size_t group_size);

struct AblationReport {
    std::map<std::string, double> baseline;
    std::map<std::string, double> masked;
    std::map<std::string, double> delta;  // masked - baseline
    double mean_delta = 0.0;
};

AblationReport ablation_delta(const std::map<std::string, double>& baseline, const std::map<std::string, double>& masked);

// JSONL ingestion: {id, context, question, answers[], spans[][2], kind, metric?, dataset?}
QASample sample_from_json(std::string_view line);
std::string sample_to_json(const QASample& sample);

/// Parses a whole JSONL file. Malformed lines throw FormatError naming the 1-based line.
std::vector<QASample> parse_samples_jsonl(std::string_view text);

}  // namespace verlab::eval
