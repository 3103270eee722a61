#include "verlab/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "json_util.hpp"
#include "templates.hpp"
#include "verlab/error.hpp"

namespace verlab {

void RetrievalConfig::validate() const {
    if (n_patches < 1) throw ConfigError("retrieval config: n_patches must be >= 1");
    if (k < 1) throw ConfigError("retrieval config: k must be >= 1");
    if (!selected_heads.empty() && selected_heads.size() != k) {
        throw ConfigError("retrieval config: k=" + std::to_string(k) + " but " +
                          std::to_string(selected_heads.size()) + " heads are preset");
    }
}

std::string_view prompt_template(std::string_view template_id) {
    if (template_id == kTemplateVeraRag) return detail::kTemplateVeraRag;
    if (template_id == kTemplateOriginal) return detail::kTemplateOriginal;
    if (template_id == kTemplateEq6) return detail::kTemplateEq6;
    throw ConfigError("unknown prompt template '" + std::string(template_id) + "'");
}

std::string fill_template(std::string_view tmpl, std::string_view question, std::string_view rag_info) {
    constexpr std::string_view kQuestion = "{question}";
    constexpr std::string_view kRag = "{rag_info}";
    std::string out;
    out.reserve(tmpl.size() + question.size() + rag_info.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl.substr(i, kQuestion.size()) == kQuestion) {
            out.append(question);
            i += kQuestion.size();
        } else if (tmpl.substr(i, kRag.size()) == kRag) {
            out.append(rag_info);
            i += kRag.size();
        } else {
            out.push_back(tmpl[i++]);
        }
    }
    return out;
}

std::vector<double> fuse_heads(const AttentionRecord& record, std::span<const HeadId> heads) {
    if (heads.empty()) {
        throw InputError("fuse_heads: no heads selected");
    }
    // Canonical summation order makes the mean independent of the caller's head order.
    std::vector<HeadId> ordered(heads.begin(), heads.end());
    std::sort(ordered.begin(), ordered.end());
    std::vector<double> fused(record.tokens, 0.0);
    for (const auto& h : ordered) {
        const auto a = record.head(h);  // range-checked
        for (std::size_t t = 0; t < fused.size(); ++t) fused[t] += a[t];
    }
    const auto n = static_cast<double>(ordered.size());
    for (double& v : fused) v /= n;
    return fused;
}

EvidencePatchSet select_top_patches(std::span<const double> fused, const PatchGrid& grid, std::size_t n) {
    if (n < 1) throw ConfigError("select_top_patches: n must be >= 1");
    if (fused.size() != grid.patch_count()) {
        throw ShapeError("select_top_patches: " + std::to_string(fused.size()) + " weights for a grid of " +
                         std::to_string(grid.patch_count()) + " patches");
    }
    std::vector<std::size_t> order(fused.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(n, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (fused[a] != fused[b]) return fused[a] > fused[b];
                          return a < b;
                      });
    EvidencePatchSet set;
    set.patches.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
        const auto idx = order[k];
        set.patches.push_back({static_cast<int>(idx / static_cast<std::size_t>(grid.grid_w)),
                               static_cast<int>(idx % static_cast<std::size_t>(grid.grid_w)), fused[idx]});
    }
    return set;
}

VerbalizedEvidence expand_to_rows(const EvidencePatchSet& patches, const PatchGrid& grid, const DocumentLayout& doc) {
    if (grid.image_h != doc.height || grid.image_w != doc.width) {
        throw ShapeError("expand_to_rows: grid covers " + std::to_string(grid.image_h) + "x" +
                         std::to_string(grid.image_w) + " but document is " + std::to_string(doc.height) + "x" +
                         std::to_string(doc.width));
    }
    std::set<std::size_t> picked;
    for (const auto& p : patches.patches) {
        if (p.i < 0 || p.i >= grid.grid_h || p.j < 0 || p.j >= grid.grid_w) {
            throw RangeError("expand_to_rows: patch (" + std::to_string(p.i) + ", " + std::to_string(p.j) +
                             ") outside grid");
        }
        const auto [y0, y1] = grid.row_extent(p.i);
        // Lines are sorted by y_top, so the intersecting ones form a contiguous run.
        auto first = std::partition_point(doc.lines.begin(), doc.lines.end(),
                                          [y0 = y0](const LineRecord& l) { return l.y_bottom <= y0; });
        for (auto it = first; it != doc.lines.end() && it->y_top < y1; ++it) {
            if (it->char_end > it->char_start) picked.insert(static_cast<std::size_t>(it - doc.lines.begin()));
        }
    }
    VerbalizedEvidence ev;
    for (auto k : picked) {
        const auto& l = doc.lines[k];
        if (!ev.lines.empty()) ev.text.push_back('\n');
        ev.text.append(doc.text, l.char_start, l.char_end - l.char_start);
        ev.lines.push_back({l.line_index, l.char_start, l.char_end});
    }
    return ev;
}

AugmentedPrompt build_prompt(const VerbalizedEvidence& evidence, std::string_view question,
                             std::string_view template_id, std::string_view image_ref) {
    if (question.empty()) {
        throw InputError("build_prompt: question is empty");
    }
    prompt_template(template_id);  // rejects unknown ids even when falling back
    AugmentedPrompt p;
    p.image_ref = image_ref;
    p.question = question;
    p.evidence_text = evidence.text;
    p.template_id = evidence.text.empty() ? std::string(kTemplateOriginal) : std::string(template_id);
    p.text = fill_template(prompt_template(p.template_id), p.question, p.evidence_text);
    return p;
}

std::string prompt_to_json(const AugmentedPrompt& p) {
    detail::json j = {{"image_ref", p.image_ref},
                      {"evidence_text", p.evidence_text},
                      {"question", p.question},
                      {"template_id", p.template_id},
                      {"prompt", p.text}};
    return detail::canonical_dump(j);
}

AugmentedPrompt prompt_from_json(std::string_view text) {
    using namespace detail;
    const json j = parse_json(text, "prompt");
    AugmentedPrompt p;
    p.image_ref = require_string(j, "prompt", "image_ref");
    p.evidence_text = require_string(j, "prompt", "evidence_text");
    p.question = require_string(j, "prompt", "question");
    p.template_id = require_string(j, "prompt", "template_id");
    p.text = require_string(j, "prompt", "prompt");
    if (p.text != fill_template(prompt_template(p.template_id), p.question, p.evidence_text)) {
        throw FormatError("prompt.prompt: text does not match template '" + p.template_id + "'");
    }
    return p;
}

VeraPlan run_vera_plan(const EntropyTrace& trace, const AttentionProvider& attention, const RetrievalConfig& config,
                       const PatchGrid& grid, const DocumentLayout& doc, std::string_view question, TriggerMode mode,
                       std::string_view template_id, std::string_view image_ref) {
    config.validate();
    if (config.selected_heads.empty()) {
        throw ConfigError("run_vera_plan: no heads selected");
    }
    VeraPlan plan;
    if (mode == TriggerMode::Instruct) {
        plan.t_star = 0;
    } else {
        plan.t_star = first_high_entropy_step(trace, config.delta).t_star;
    }
    if (!plan.t_star) {
        return plan;
    }
    plan.triggered = true;
    const AttentionRecord record = attention(*plan.t_star);
    if (record.step != *plan.t_star) {
        throw InputError("run_vera_plan: attention provider returned step " + std::to_string(record.step) +
                         " for t*=" + std::to_string(*plan.t_star));
    }
    const auto fused = fuse_heads(record, config.selected_heads);
    plan.patches = select_top_patches(fused, grid, config.n_patches);
    plan.patches.step = *plan.t_star;
    plan.evidence = expand_to_rows(plan.patches, grid, doc);
    plan.prompt = build_prompt(plan.evidence, question, template_id, image_ref);
    return plan;
}

}  // namespace verlab
