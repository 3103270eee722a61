#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verlab/analysis.hpp"
#include "verlab/geometry.hpp"
#include "verlab/renderer.hpp"

namespace verlab {

struct RetrievalConfig {
    std::size_t k = 5;
    std::size_t n_patches = 20;
    double delta = 2.0;
    std::vector<HeadId> selected_heads;

    void validate() const;
};

struct EvidencePatch {
    int i = 0;
    int j = 0;
    double weight = 0.0;

    bool operator==(const EvidencePatch&) const = default;
};

/// Highest fused-attention patches, weight descending, row-major tie-break.
struct EvidencePatchSet {
    std::vector<EvidencePatch> patches;
    std::size_t step = 0;
};

struct LineProvenance {
    std::size_t line_index = 0;
    std::size_t char_start = 0;
    std::size_t char_end = 0;

    bool operator==(const LineProvenance&) const = default;
};

/// Source lines recovered from selected patches, in document order.
struct VerbalizedEvidence {
    std::vector<LineProvenance> lines;
    std::string text;  // newline-joined slices of the normalized source

    bool operator==(const VerbalizedEvidence&) const = default;
};

inline constexpr std::string_view kTemplateVeraRag = "vera-rag";
inline constexpr std::string_view kTemplateOriginal = "original";
inline constexpr std::string_view kTemplateEq6 = "eq6";

struct AugmentedPrompt {
    std::string image_ref;
    std::string evidence_text;
    std::string question;
    std::string template_id;
    std::string text;  // the serialized prompt

    bool operator==(const AugmentedPrompt&) const = default;
};

/// Raw template bytes with {question} / {rag_info} placeholders.
std::string_view prompt_template(std::string_view template_id);

/// Substitutes placeholders in one left-to-right pass; substituted text is never rescanned.
std::string fill_template(std::string_view tmpl, std::string_view question, std::string_view rag_info);

/// Mean of the selected heads' visual-token vectors.
std::vector<double> fuse_heads(const AttentionRecord& record, std::span<const HeadId> heads);

EvidencePatchSet select_top_patches(std::span<const double> fused, const PatchGrid& grid, std::size_t n);

/// Every text line whose rows intersect a selected patch row, deduplicated, in
/// document order, sliced straight from the source text.
VerbalizedEvidence expand_to_rows(const EvidencePatchSet& patches, const PatchGrid& grid, const DocumentLayout& doc);

/// Empty evidence falls back to the "original" template.
AugmentedPrompt build_prompt(const VerbalizedEvidence& evidence, std::string_view question,
                             std::string_view template_id = kTemplateVeraRag, std::string_view image_ref = {});

std::string prompt_to_json(const AugmentedPrompt& prompt);
/// Throws FormatError if the stored prompt text does not match its template.
AugmentedPrompt prompt_from_json(std::string_view json);

enum class TriggerMode {
    Reasoning,  // retrieve at t*, the first high-entropy step
    Instruct,   // retrieve at step 0 regardless of the trace
};

struct VeraPlan {
    bool triggered = false;
    std::optional<std::size_t> t_star;
    EvidencePatchSet patches;
    VerbalizedEvidence evidence;
    std::optional<AugmentedPrompt> prompt;
};

using AttentionProvider = std::function<AttentionRecord(std::size_t step)>;

/// Entropy-triggered retrieval plan for one sample. Only the first
/// high-entropy step triggers; without a trigger the first-pass answer stands
/// and no prompt is built.
VeraPlan run_vera_plan(const EntropyTrace& trace, const AttentionProvider& attention, const RetrievalConfig& config,
                       const PatchGrid& grid, const DocumentLayout& doc, std::string_view question,
                       TriggerMode mode = TriggerMode::Reasoning, std::string_view template_id = kTemplateVeraRag,
                       std::string_view image_ref = {});

}  // namespace verlab
