#include "verlab/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json_util.hpp"
#include "verlab/error.hpp"

namespace verlab::eval {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string_view to_string(AnswerKind kind) {
    switch (kind) {
        case AnswerKind::Extractive: return "extractive";
        case AnswerKind::Abstractive: return "abstractive";
        case AnswerKind::Boolean: return "boolean";
        case AnswerKind::Numeric: return "numeric";
    }
    return "extractive";
}

AnswerKind parse_answer_kind(std::string_view s) {
    if (s == "extractive") return AnswerKind::Extractive;
    if (s == "abstractive") return AnswerKind::Abstractive;
    if (s == "boolean") return AnswerKind::Boolean;
    if (s == "numeric") return AnswerKind::Numeric;
    throw FormatError("unknown answer kind '" + std::string(s) + "'");
}

std::string_view to_string(MetricKind kind) { return kind == MetricKind::Precision ? "precision" : "f1"; }

MetricKind parse_metric_kind(std::string_view s) {
    if (s == "f1") return MetricKind::F1;
    if (s == "precision") return MetricKind::Precision;
    throw FormatError("unknown metric '" + std::string(s) + "'");
}

void QASample::validate() const {
    for (const auto& span : gold_spans) {
        if (span.char_start >= span.char_end || span.char_end > context.size()) {
            throw RangeError("sample " + id + ": span [" + std::to_string(span.char_start) + ", " +
                             std::to_string(span.char_end) + ") outside context of length " +
                             std::to_string(context.size()));
        }
    }
}

std::vector<std::size_t> offsets_from_spans(std::span<const EvidenceSpan> spans) {
    std::vector<std::size_t> out;
    for (const auto& s : spans) {
        for (std::size_t c = s.char_start; c < s.char_end; ++c) out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

RetrievalEval retrieval_prf(std::string_view context, std::span<const std::size_t> retrieved,
                            std::span<const EvidenceSpan> gold_spans) {
    std::set<std::size_t> gold;
    for (const auto& s : gold_spans) {
        if (s.char_start > s.char_end || s.char_end > context.size()) {
            throw RangeError("retrieval_prf: gold span outside context");
        }
        for (std::size_t c = s.char_start; c < s.char_end; ++c) {
            if (!is_space(context[c])) gold.insert(c);
        }
    }
    if (gold.empty()) {
        throw InputError("retrieval_prf: gold spans cover no non-whitespace characters");
    }
    std::set<std::size_t> got;
    for (auto c : retrieved) {
        if (c >= context.size()) {
            throw RangeError("retrieval_prf: retrieved offset " + std::to_string(c) + " outside context");
        }
        if (!is_space(context[c])) got.insert(c);
    }
    std::size_t hit = 0;
    for (auto c : got) hit += gold.count(c);

    RetrievalEval e;
    e.precision = got.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(got.size());
    e.recall = static_cast<double>(hit) / static_cast<double>(gold.size());
    e.f1 = (e.precision + e.recall) > 0.0 ? 2.0 * e.precision * e.recall / (e.precision + e.recall) : 0.0;
    return e;
}

std::vector<std::string> answer_tokens(std::string_view s) {
    std::string cleaned;
    cleaned.reserve(s.size());
    for (char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(u)));
    }
    std::vector<std::string> tokens;
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        tokens.push_back(tok);
    }
    return tokens;
}

std::string normalize_answer(std::string_view s) {
    std::string out;
    for (const auto& t : answer_tokens(s)) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

TokenPRF token_prf(std::string_view prediction, std::string_view gold) {
    const auto p = answer_tokens(prediction);
    const auto g = answer_tokens(gold);
    std::unordered_map<std::string, int> counts;
    for (const auto& t : g) ++counts[t];
    std::size_t same = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++same;
        }
    }
    TokenPRF r;
    if (same == 0) return r;
    r.precision = static_cast<double>(same) / static_cast<double>(p.size());
    r.recall = static_cast<double>(same) / static_cast<double>(g.size());
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

double qa_f1(std::string_view prediction, std::span<const std::string> golds) {
    if (golds.empty()) throw InputError("qa_f1: no gold answers");
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, token_prf(prediction, g).f1);
    return best;
}

double qa_precision(std::string_view prediction, std::span<const std::string> golds) {
    if (golds.empty()) throw InputError("qa_precision: no gold answers");
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, token_prf(prediction, g).precision);
    return best;
}

int exact_match(std::string_view prediction, std::span<const std::string> golds) {
    const auto p = normalize_answer(prediction);
    for (const auto& g : golds) {
        if (normalize_answer(g) == p) return 1;
    }
    return 0;
}

std::optional<double> parse_numeric_answer(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    if (!s.empty() && s.back() == '%') s.remove_suffix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    if (s.find('.') != std::string_view::npos) {
        while (!s.empty() && s.back() == '0') s.remove_suffix(1);
        if (!s.empty() && s.back() == '.') s.remove_suffix(1);
    }
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

bool numeric_match(std::string_view prediction, std::string_view gold) {
    const auto p = parse_numeric_answer(prediction);
    const auto g = parse_numeric_answer(gold);
    if (!p || !g) return false;
    const double scale = std::max(std::abs(*p), std::abs(*g));
    return std::abs(*p - *g) <= 1e-6 * scale;
}

double score_prediction(const QASample& sample, std::string_view prediction) {
    if (sample.answer_kind == AnswerKind::Numeric) {
        for (const auto& g : sample.gold_answers) {
            if (numeric_match(prediction, g)) return 1.0;
        }
        return 0.0;
    }
    return sample.metric == MetricKind::Precision ? qa_precision(prediction, sample.gold_answers)
                                                  : qa_f1(prediction, sample.gold_answers);
}

std::vector<QASample> concat_contexts(std::span<const QASample> samples, std::size_t group_size) {
    if (group_size < 1) throw InputError("concat_contexts: group_size must be >= 1");
    std::vector<QASample> out;
    out.reserve(samples.size());
    for (std::size_t g = 0; g < samples.size(); g += group_size) {
        const std::size_t end = std::min(samples.size(), g + group_size);
        std::string merged;
        std::vector<std::size_t> offsets;
        for (std::size_t i = g; i < end; ++i) {
            if (i > g) merged.append(kContextSeparator);
            offsets.push_back(merged.size());
            merged.append(samples[i].context);
        }
        for (std::size_t i = g; i < end; ++i) {
            QASample s = samples[i];
            s.context = merged;
            for (auto& span : s.gold_spans) {
                span.char_start += offsets[i - g];
                span.char_end += offsets[i - g];
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

AblationReport ablation_delta(const std::map<std::string, double>& baseline, const std::map<std::string, double>& masked) {
    std::string mismatch;
    for (const auto& [k, v] : baseline) {
        if (!masked.contains(k)) mismatch += " " + k;
    }
    for (const auto& [k, v] : masked) {
        if (!baseline.contains(k)) mismatch += " " + k;
    }
    if (!mismatch.empty()) throw InputError("ablation_delta: dataset keys differ:" + mismatch);
    if (baseline.empty()) throw InputError("ablation_delta: no datasets");

    AblationReport r;
    r.baseline = baseline;
    r.masked = masked;
    double sum = 0.0;
    for (const auto& [k, b] : baseline) {
        const double d = masked.at(k) - b;
        r.delta[k] = d;
        sum += d;
    }
    r.mean_delta = sum / static_cast<double>(baseline.size());
    return r;
}

QASample sample_from_json(std::string_view line) {
    using namespace detail;
    const json j = parse_json(line, "sample");
    if (!j.is_object()) throw FormatError("sample: expected object");
    QASample s;
    const json& id = require(j, "sample", "id");
    s.id = id.is_string() ? id.get<std::string>() : id.dump();
    s.context = require_string(j, "sample", "context");
    s.question = require_string(j, "sample", "question");
    const json& answers = require(j, "sample", "answers");
    if (!answers.is_array()) throw FormatError("sample.answers: expected array");
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (!answers[i].is_string()) {
            throw FormatError("sample.answers[" + std::to_string(i) + "]: expected string");
        }
        s.gold_answers.push_back(answers[i].get<std::string>());
    }
    if (auto it = j.find("spans"); it != j.end()) {
        if (!it->is_array()) throw FormatError("sample.spans: expected array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& sp = (*it)[i];
            if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number_integer() || !sp[1].is_number_integer() ||
                sp[0].get<std::int64_t>() < 0 || sp[1].get<std::int64_t>() < 0) {
                throw FormatError("sample.spans[" + std::to_string(i) + "]: expected [start, end]");
            }
            s.gold_spans.push_back({sp[0].get<std::size_t>(), sp[1].get<std::size_t>()});
        }
    }
    if (auto it = j.find("kind"); it != j.end()) {
        if (!it->is_string()) throw FormatError("sample.kind: expected string");
        s.answer_kind = parse_answer_kind(it->get<std::string>());
    }
    if (auto it = j.find("metric"); it != j.end()) {
        if (!it->is_string()) throw FormatError("sample.metric: expected string");
        s.metric = parse_metric_kind(it->get<std::string>());
    }
    if (auto it = j.find("dataset"); it != j.end()) {
        if (!it->is_string()) throw FormatError("sample.dataset: expected string");
        s.dataset = it->get<std::string>();
    }
    return s;
}

std::string sample_to_json(const QASample& s) {
    detail::json spans = detail::json::array();
    for (const auto& sp : s.gold_spans) spans.push_back({sp.char_start, sp.char_end});
    detail::json j = {{"id", s.id},
                      {"context", s.context},
                      {"question", s.question},
                      {"answers", s.gold_answers},
                      {"spans", std::move(spans)},
                      {"kind", to_string(s.answer_kind)}};
    if (s.metric != MetricKind::F1) j["metric"] = to_string(s.metric);
    if (!s.dataset.empty()) j["dataset"] = s.dataset;
    return detail::compact_dump(j);
}

std::vector<QASample> parse_samples_jsonl(std::string_view text) {
    std::vector<QASample> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (std::all_of(line.begin(), line.end(), is_space)) continue;
        try {
            out.push_back(sample_from_json(line));
        } catch (const FormatError& e) {
            throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace verlab::eval
