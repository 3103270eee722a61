#include <set>

#include "cli_common.hpp"
#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"
#include "verlab/geometry.hpp"
#include "verlab/synth.hpp"

namespace verlab::cli {

int cmd_fixtures(const RunConfig& cfg, std::size_t count, std::size_t lines, std::uint64_t seed,
                 const std::string& dataset) {
    const auto samples = synth::fixture_samples(count, lines, cfg.render, seed, dataset);
    std::string out;
    for (const auto& s : samples) out += eval::sample_to_json(s) + "\n";
    const fs::path path = cfg.out.extension() == ".jsonl" ? cfg.out : cfg.out / "samples.jsonl";
    io::write_file(path, out);
    spdlog::info("wrote {} fixture samples to {}", samples.size(), path.string());
    return kOk;
}

namespace {

json render_one(const RunConfig& cfg, const eval::QASample& raw, const fs::path& dir) {
    raw.validate();
    const auto norm = normalize_whitespace(raw.context);
    eval::QASample s = raw;
    s.context = norm.text;
    s.gold_spans.clear();
    for (const auto& sp : raw.gold_spans) {
        const auto mapped = norm.map_span(sp);
        if (mapped.char_start == mapped.char_end) {
            throw RangeError("sample " + raw.id + ": span [" + std::to_string(sp.char_start) + ", " +
                             std::to_string(sp.char_end) + ") covers only whitespace");
        }
        s.gold_spans.push_back(mapped);
    }

    const auto doc = render(norm.text, cfg.render);
    const auto boxes = evidence_boxes(doc.layout, s.gold_spans);
    const auto mask = evidence_mask(boxes, doc.height(), doc.width());
    const auto grid = make_grid(doc.height(), doc.width(), cfg.patch_size);
    const auto cov = coverage_weights(mask, grid);
    const auto stats = evidence_ratio(mask);

    io::write_file(dir / "image.pgm", encode_pgm(doc.image));
    io::write_file(dir / "image.png", encode_png(doc.image));
    io::write_file(dir / "mask.pgm", encode_pgm(mask_to_raster(mask)));
    io::write_file(dir / "layout.json", layout_to_json(doc.layout));
    io::write_file(dir / "text.txt", doc.layout.text);
    io::write_file(dir / "sample.json", eval::sample_to_json(s) + "\n");
    io::write_file(dir / "coverage.bin", encode_coverage(cov, cfg.patch_size));

    json boxes_json = json::array();
    for (const auto& b : boxes) boxes_json.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    const json meta = {{"rho", stats.rho},
                       {"evidence_pixels", stats.evidence_pixel_count},
                       {"total_pixels", stats.total_pixels},
                       {"patch_size", cfg.patch_size},
                       {"grid", {grid.grid_h, grid.grid_w}},
                       {"boxes", std::move(boxes_json)}};
    write_json(dir / "evidence.json", meta);
    return {{"height", doc.height()},
            {"width", doc.width()},
            {"pages", doc.layout.page_count},
            {"lines", doc.layout.lines.size()},
            {"rho", stats.rho}};
}

}  // namespace

int cmd_render(const RunConfig& cfg, const fs::path& samples_path) {
    const auto samples = eval::parse_samples_jsonl(io::read_file(samples_path));
    std::set<std::string> seen;
    std::vector<bool> duplicate(samples.size(), false);
    for (std::size_t i = 0; i < samples.size(); ++i) duplicate[i] = !seen.insert(samples[i].id).second;

    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    const auto outcomes = run_pool(ids, cfg.workers, [&](std::size_t i) {
        SampleOutcome o;
        o.id = samples[i].id;
        try {
            if (duplicate[i]) throw InputError("duplicate sample id '" + o.id + "'");
            check_sample_id(o.id);
            o.record = render_one(cfg, samples[i], cfg.out / "samples" / o.id);
        } catch (const Error& e) {
            o.error = e.what();
        }
        return o;
    });

    json rendered = json::array(), details = json::object();
    for (const auto& o : outcomes) {
        if (o.error) {
            spdlog::warn("sample {}: {}", o.id, *o.error);
            continue;
        }
        rendered.push_back(o.id);
        details[o.id] = o.record;
    }
    const json report = {{"samples_in", samples.size()},
                         {"rendered", rendered},
                         {"details", details},
                         {"failures", failures_json(outcomes)},
                         {"patch_size", cfg.patch_size},
                         {"render_config",
                          {{"page_width_px", cfg.render.page_width_px},
                           {"page_height_px", cfg.render.page_height_px},
                           {"margin_x", cfg.render.margin_x},
                           {"margin_y", cfg.render.margin_y},
                           {"char_width_px", cfg.render.char_width_px},
                           {"line_height_px", cfg.render.line_height_px},
                           {"ink_value", cfg.render.ink_value},
                           {"background_value", cfg.render.background_value}}}};
    write_json(cfg.out / "render_report.json", report);
    const auto failed = failure_count(outcomes);
    spdlog::info("rendered {}/{} samples into {}", samples.size() - failed, samples.size(), cfg.out.string());
    return failed ? kPartial : kOk;
}

}  // namespace verlab::cli
