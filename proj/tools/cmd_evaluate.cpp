#include <fmt/format.h>

#include <map>
#include <set>

#include "cli_common.hpp"
#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"

namespace verlab::cli {

namespace {

std::map<std::string, std::string> parse_predictions(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        const auto where = "predictions line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("prediction") || !j["prediction"].is_string()) {
            throw FormatError(where + ": expected {\"id\", \"prediction\"}");
        }
        const std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        if (!out.emplace(id, j["prediction"].get<std::string>()).second) {
            throw FormatError(where + ": duplicate id '" + id + "'");
        }
    }
    return out;
}

struct Bucket {
    double score = 0.0;
    double em = 0.0;
    std::size_t n = 0;

    json to_json() const {
        const double d = n ? static_cast<double>(n) : 1.0;
        return {{"count", n}, {"score", score / d}, {"exact_match", em / d}};
    }
};

}  // namespace

int cmd_evaluate(const RunConfig& cfg, const fs::path& predictions_path, const fs::path& samples_path) {
    const auto samples = eval::parse_samples_jsonl(io::read_file(samples_path));
    const auto predictions = parse_predictions(io::read_file(predictions_path));

    Bucket overall;
    std::map<std::string, Bucket> by_kind, by_dataset;
    json missing = json::array(), unknown = json::array();
    std::set<std::string> sample_ids;
    std::string csv = "id,dataset,kind,metric,score,exact_match\n";
    for (const auto& s : samples) {
        sample_ids.insert(s.id);
        const auto it = predictions.find(s.id);
        if (it == predictions.end()) missing.push_back(s.id);
        const std::string pred = it == predictions.end() ? std::string() : it->second;
        const double score = s.gold_answers.empty() ? 0.0 : eval::score_prediction(s, pred);
        const int em = eval::exact_match(pred, s.gold_answers);
        const std::string kind(eval::to_string(s.answer_kind));
        for (Bucket* b : {&overall, &by_kind[kind], &by_dataset[s.dataset.empty() ? "default" : s.dataset]}) {
            b->score += score;
            b->em += em;
            ++b->n;
        }
        csv += fmt::format("{},{},{},{},{:.17g},{}\n", json(s.id).dump(), json(s.dataset).dump(), kind,
                           eval::to_string(s.metric), score, em);
    }
    for (const auto& [id, p] : predictions) {
        if (!sample_ids.contains(id)) unknown.push_back(id);
    }

    json kinds = json::object(), sets = json::object();
    for (const auto& [k, b] : by_kind) kinds[k] = b.to_json();
    for (const auto& [k, b] : by_dataset) sets[k] = b.to_json();
    const json report = {{"overall", overall.to_json()},
                         {"per_kind", kinds},
                         {"per_dataset", sets},
                         {"missing_predictions", missing},
                         {"unknown_predictions", unknown}};
    write_json(cfg.out / "metrics.json", report);
    io::write_file(cfg.out / "metrics.csv", csv);
    if (!missing.empty() || !unknown.empty()) {
        spdlog::warn("id mismatch: {} samples without prediction, {} predictions without sample", missing.size(),
                     unknown.size());
        return kPartial;
    }
    return kOk;
}

}  // namespace verlab::cli
