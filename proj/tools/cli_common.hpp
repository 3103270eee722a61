#pragma once

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "verlab/analysis.hpp"
#include "verlab/evalkit.hpp"
#include "verlab/renderer.hpp"
#include "verlab/retrieval.hpp"

namespace verlab::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kPartial = 1, kFatal = 2 };

/// Settings shared by every subcommand. TOML config is applied first, flags override.
struct RunConfig {
    RenderConfig render;
    int patch_size = 28;
    std::size_t k = 5;
    std::size_t n_patches = 20;
    double delta = 2.0;
    TriggerMode mode = TriggerMode::Reasoning;
    std::size_t workers = 1;
    fs::path out;
    std::string template_id = std::string(kTemplateVeraRag);

    void validate() const;
};

/// Reads a TOML config into `cfg`. Unknown keys are rejected.
void apply_toml(const fs::path& path, RunConfig& cfg);

TriggerMode parse_mode(const std::string& s);
std::string_view mode_name(TriggerMode m);

/// Per-sample outcome collected in input order.
struct SampleOutcome {
    std::string id;
    std::optional<std::string> error;
    json record;  // subcommand-specific summary
};

/// Runs fn(i) for every sample on `workers` threads. Results come back in
/// input order; an exception inside fn becomes that sample's error, except
/// MissingStepError which aborts the batch.
std::vector<SampleOutcome> run_pool(const std::vector<std::string>& ids, std::size_t workers,
                                    const std::function<SampleOutcome(std::size_t)>& fn);

/// Sorted-key, two-space JSON with a trailing newline.
std::string dump(const json& j);
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// Ids become directory names, so they must be plain file names.
void check_sample_id(const std::string& id);

json matrix_to_json(const ScoreMatrix& m);
ScoreMatrix matrix_from_json(const json& j);
json head_to_json(HeadId h);
HeadId head_from_json(const json& j);

/// "l:h,l:h" list.
std::vector<HeadId> parse_head_list(const std::string& s);

json failures_json(const std::vector<SampleOutcome>& outcomes);
std::size_t failure_count(const std::vector<SampleOutcome>& outcomes);

/// Files written by `render` for one sample.
struct RenderedSample {
    eval::QASample sample;  // context and spans in normalized coordinates
    DocumentLayout layout;
    CoverageWeights coverage;
    EvidenceStats stats;
    int patch_size = 28;
};

RenderedSample load_rendered_sample(const fs::path& sample_dir);

/// Sample ids listed as rendered successfully, in input order.
std::vector<std::string> rendered_ids(const fs::path& render_dir);

int cmd_fixtures(const RunConfig& cfg, std::size_t count, std::size_t lines, std::uint64_t seed,
                 const std::string& dataset);
int cmd_render(const RunConfig& cfg, const fs::path& samples);
int cmd_synth(const RunConfig& cfg, const fs::path& render_dir, int layers, int heads, HeadId planted, double q,
              std::optional<std::size_t> trigger, std::uint64_t seed, bool permute, std::optional<double> noise);
int cmd_score(const RunConfig& cfg, const fs::path& render_dir, const fs::path& runs_dir, std::size_t step);
int cmd_retrieve(const RunConfig& cfg, const fs::path& render_dir, const fs::path& runs_dir, const std::string& heads,
                 const fs::path& score_report);
int cmd_evaluate(const RunConfig& cfg, const fs::path& predictions, const fs::path& samples);

}  // namespace verlab::cli
