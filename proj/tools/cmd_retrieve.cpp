#include "cli_common.hpp"
#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"

namespace verlab::cli {

namespace {

std::vector<HeadId> resolve_heads(const std::string& heads, const fs::path& score_report, std::size_t k) {
    if (heads != "auto") return parse_head_list(heads);
    if (score_report.empty()) throw ConfigError("--heads auto needs --score <report.json>");
    const json report = read_json(score_report);
    std::vector<HeadId> out;
    for (const auto& h : report.at("top_k")) {
        if (out.size() == k) break;
        out.push_back(head_from_json(h));
    }
    if (out.size() < k) {
        throw ConfigError("score report lists " + std::to_string(out.size()) + " heads, k=" + std::to_string(k));
    }
    return out;
}

json plan_to_json(const VeraPlan& plan) {
    json patches = json::array(), lines = json::array();
    for (const auto& p : plan.patches.patches) patches.push_back({{"i", p.i}, {"j", p.j}, {"weight", p.weight}});
    for (const auto& l : plan.evidence.lines) {
        lines.push_back({{"line_index", l.line_index}, {"char_start", l.char_start}, {"char_end", l.char_end}});
    }
    return {{"triggered", plan.triggered},
            {"t_star", plan.t_star ? json(*plan.t_star) : json(nullptr)},
            {"patches", patches},
            {"evidence", {{"lines", lines}, {"text", plan.evidence.text}}}};
}

}  // namespace

int cmd_retrieve(const RunConfig& cfg, const fs::path& render_dir, const fs::path& runs_dir, const std::string& heads,
                 const fs::path& score_report) {
    RetrievalConfig rcfg;
    rcfg.selected_heads = resolve_heads(heads, score_report, cfg.k);
    rcfg.k = rcfg.selected_heads.size();
    rcfg.n_patches = cfg.n_patches;
    rcfg.delta = cfg.delta;
    rcfg.validate();

    const auto ids = rendered_ids(render_dir);
    std::vector<std::optional<std::string>> prompt_lines(ids.size());

    const auto outcomes = run_pool(ids, cfg.workers, [&](std::size_t i) {
        SampleOutcome o;
        o.id = ids[i];
        try {
            const fs::path sample_dir = render_dir / "samples" / o.id;
            const auto rs = load_rendered_sample(sample_dir);
            const fs::path run = runs_dir / o.id;
            const auto manifest = io::load_manifest(run);
            const auto grid = make_grid(rs.layout.height, rs.layout.width, manifest.patch_size_px);
            if (grid.grid_h != manifest.grid_h || grid.grid_w != manifest.grid_w) {
                throw ShapeError("run grid does not match the rendered image");
            }
            for (const auto& h : rcfg.selected_heads) {
                if (h.layer >= manifest.num_layers || h.head >= manifest.num_heads) {
                    throw RangeError("selected head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                                     ") outside run topology");
                }
            }
            const auto trace = io::read_entropy_trace(run);
            AttentionProvider provider = [&](std::size_t step) { return io::read_step_attention(run, manifest, step); };
            const auto image_ref = (sample_dir / "image.png").lexically_relative(render_dir).generic_string();
            const auto plan = run_vera_plan(trace, provider, rcfg, grid, rs.layout, rs.sample.question, cfg.mode,
                                            cfg.template_id, image_ref);

            json rec = {{"id", o.id}, {"mode", mode_name(cfg.mode)}, {"plan", plan_to_json(plan)}};
            if (plan.prompt) {
                rec["prompt"] = json::parse(prompt_to_json(*plan.prompt));
                prompt_lines[i] = json{{"id", o.id}, {"prompt", rec["prompt"]}}.dump();
            } else {
                rec["prompt"] = nullptr;
                prompt_lines[i] = json{{"id", o.id}, {"pass_through", true}}.dump();
            }
            if (!rs.sample.gold_spans.empty()) {
                std::vector<EvidenceSpan> got;
                for (const auto& l : plan.evidence.lines) got.push_back({l.char_start, l.char_end});
                const auto offsets = eval::offsets_from_spans(got);
                const auto e = eval::retrieval_prf(rs.layout.text, offsets, rs.sample.gold_spans);
                rec["eval"] = {{"precision", e.precision}, {"recall", e.recall}, {"f1", e.f1}};
            }
            write_json(cfg.out / "samples" / (o.id + ".json"), rec);
            o.record = rec;
        } catch (const MissingStepError& e) {
            o.error = e.what();
        }
        return o;
    });

    std::string prompts;
    double sp = 0, sr = 0, sf = 0;
    std::size_t evaluated = 0, triggered = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        if (o.error) {
            spdlog::warn("sample {}: {}", o.id, *o.error);
            continue;
        }
        prompts += *prompt_lines[i] + "\n";
        triggered += o.record.at("plan").at("triggered").get<bool>();
        if (o.record.contains("eval")) {
            const auto& e = o.record.at("eval");
            sp += e.at("precision").get<double>();
            sr += e.at("recall").get<double>();
            sf += e.at("f1").get<double>();
            ++evaluated;
        }
    }
    io::write_file(cfg.out / "prompts.jsonl", prompts);

    json heads_json = json::array();
    for (const auto& h : rcfg.selected_heads) heads_json.push_back(head_to_json(h));
    json report = {{"mode", mode_name(cfg.mode)},
                   {"heads", heads_json},
                   {"n_patches", cfg.n_patches},
                   {"delta", cfg.delta},
                   {"template", cfg.template_id},
                   {"samples", outcomes.size() - failure_count(outcomes)},
                   {"triggered", triggered},
                   {"failures", failures_json(outcomes)}};
    if (evaluated) {
        const double n = static_cast<double>(evaluated);
        report["eval"] = {{"samples", evaluated}, {"precision", sp / n}, {"recall", sr / n}, {"f1", sf / n}};
    }
    write_json(cfg.out / "report.json", report);
    spdlog::info("retrieval: {} samples, {} triggered", outcomes.size(), triggered);
    return failure_count(outcomes) ? kPartial : kOk;
}

}  // namespace verlab::cli
