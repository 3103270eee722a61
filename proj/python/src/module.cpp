#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "verlab/analysis.hpp"
#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"
#include "verlab/geometry.hpp"
#include "verlab/renderer.hpp"
#include "verlab/synth.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace verlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using HeadList = std::vector<std::pair<int, int>>;

RenderConfig make_config(int page_width, int page_height, int margin_x, int margin_y, int char_width,
                         int line_height) {
    RenderConfig c;
    c.page_width_px = page_width;
    c.page_height_px = page_height;
    c.margin_x = margin_x;
    c.margin_y = margin_y;
    c.char_width_px = char_width;
    c.line_height_px = line_height;
    c.validate();
    return c;
}

std::vector<EvidenceSpan> to_spans(const HeadList& spans) {
    std::vector<EvidenceSpan> out;
    for (const auto& [a, b] : spans) {
        if (a < 0 || b < 0) throw RangeError("span offsets must be non-negative");
        out.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
    }
    return out;
}

HeadList to_pairs(const std::vector<HeadId>& heads) {
    HeadList out;
    for (const auto& h : heads) out.emplace_back(h.layer, h.head);
    return out;
}

std::vector<HeadId> to_heads(const HeadList& pairs) {
    std::vector<HeadId> out;
    for (const auto& [l, h] : pairs) out.push_back({l, h});
    return out;
}

ScoreMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d (layers, heads) array");
    ScoreMatrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.values.begin());
    return m;
}

py::array_t<double> from_matrix(const ScoreMatrix& m) {
    py::array_t<double> out({m.num_layers, m.num_heads});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

AttentionRecord to_record(const Array& a, std::size_t step) {
    if (a.ndim() != 3) throw ShapeError("expected a 3-d (layers, heads, tokens) array");
    AttentionRecord r(step, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      static_cast<std::size_t>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), r.attn.begin());
    return r;
}

py::array_t<double> from_record(const AttentionRecord& r) {
    py::array_t<double> out({static_cast<py::ssize_t>(r.num_layers), static_cast<py::ssize_t>(r.num_heads),
                             static_cast<py::ssize_t>(r.tokens)});
    std::copy(r.attn.begin(), r.attn.end(), out.mutable_data());
    return out;
}

py::array_t<std::uint8_t> from_pixels(int h, int w, const std::vector<std::uint8_t>& px) {
    py::array_t<std::uint8_t> out({h, w});
    std::copy(px.begin(), px.end(), out.mutable_data());
    return out;
}

py::dict rendered_dict(const RenderedDocument& doc, const EvidenceMask& mask, int patch_size) {
    const auto grid = make_grid(doc.height(), doc.width(), patch_size);
    const auto cov = coverage_weights(mask, grid);
    py::array_t<double> weights({cov.grid_h, cov.grid_w});
    std::copy(cov.weights.begin(), cov.weights.end(), weights.mutable_data());
    py::list lines;
    for (const auto& l : doc.layout.lines) {
        py::dict d;
        d["line_index"] = l.line_index;
        d["char_start"] = l.char_start;
        d["char_end"] = l.char_end;
        d["y_top"] = l.y_top;
        d["y_bottom"] = l.y_bottom;
        d["x_left"] = l.x_left;
        lines.append(d);
    }
    py::dict out;
    out["text"] = doc.layout.text;
    out["image"] = from_pixels(doc.image.height, doc.image.width, doc.image.pixels);
    out["mask"] = from_pixels(mask.height, mask.width, mask.mask);
    out["coverage"] = weights;
    out["rho"] = evidence_ratio(mask).rho;
    out["page_count"] = doc.layout.page_count;
    out["lines"] = lines;
    out["pgm"] = py::bytes(encode_pgm(doc.image));
    return out;
}

}  // namespace

PYBIND11_MODULE(_verlab, m) {
    m.doc() = "Visual-evidence head analysis and entropy-triggered retrieval";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<InputError>(m, "InputError", base.ptr());
    py::register_exception<NormalizationError>(m, "NormalizationError", base.ptr());
    py::register_exception<DegenerateThresholdError>(m, "DegenerateThresholdError", base.ptr());
    auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<UnsupportedVersionError>(m, "UnsupportedVersionError", format.ptr());
    py::register_exception<TruncationError>(m, "TruncationError", format.ptr());
    py::register_exception<NonFiniteError>(m, "NonFiniteError", format.ptr());
    py::register_exception<MissingStepError>(m, "MissingStepError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    m.def(
        "render",
        [](const std::string& text, const HeadList& spans, int patch_size, int page_width, int page_height,
           int margin_x, int margin_y, int char_width, int line_height) {
            const auto cfg = make_config(page_width, page_height, margin_x, margin_y, char_width, line_height);
            const auto norm = normalize_whitespace(text);
            std::vector<EvidenceSpan> mapped;
            for (const auto& s : to_spans(spans)) mapped.push_back(norm.map_span(s));
            const auto doc = render(text, cfg);
            const auto boxes = evidence_boxes(doc.layout, mapped);
            return rendered_dict(doc, evidence_mask(boxes, doc.height(), doc.width()), patch_size);
        },
        py::arg("text"), py::arg("spans") = HeadList{}, py::kw_only(), py::arg("patch_size") = 28,
        py::arg("page_width") = 595, py::arg("page_height") = 842, py::arg("margin_x") = 10,
        py::arg("margin_y") = 10, py::arg("char_width") = 6, py::arg("line_height") = 10,
        "Renders text and returns image, evidence mask, coverage weights and line geometry.");

    m.def(
        "head_scores",
        [](const Array& attn, const Array& coverage, double rho) {
            if (coverage.ndim() != 2) throw ShapeError("coverage must be 2-d");
            CoverageWeights w;
            w.grid_h = static_cast<int>(coverage.shape(0));
            w.grid_w = static_cast<int>(coverage.shape(1));
            w.weights.assign(coverage.data(), coverage.data() + coverage.size());
            EvidenceStats stats;
            stats.rho = rho;
            const auto t = head_scores(to_record(attn, 0), w, stats);
            return py::make_tuple(from_matrix(t.raw), from_matrix(t.normalized));
        },
        py::arg("attn"), py::arg("coverage"), py::arg("rho"),
        "Raw and rho-normalized per-head evidence scores for a (layers, heads, tokens) array.");

    m.def(
        "identify_ver_heads",
        [](const Array& scores) {
            const auto s = identify_ver_heads(to_matrix(scores));
            return py::make_tuple(to_pairs(s.heads), s.tau);
        },
        py::arg("scores"));
    m.def(
        "top_k_heads", [](const Array& scores, std::size_t k) { return to_pairs(top_k_heads(to_matrix(scores), k)); },
        py::arg("scores"), py::arg("k"));
    m.def(
        "token_entropy", [](const std::vector<double>& p) { return token_entropy(p); }, py::arg("probs"));
    m.def(
        "entropy_from_logits", [](const std::vector<double>& z) { return entropy_from_logits(z); },
        py::arg("logits"));
    m.def(
        "first_high_entropy_step",
        [](const std::vector<double>& entropies, double delta) {
            return first_high_entropy_step(EntropyTrace{entropies}, delta).t_star;
        },
        py::arg("entropies"), py::arg("delta") = 2.0);
    m.def(
        "spearman",
        [](const std::vector<double>& a, const std::vector<double>& b) { return spearman_correlation(a, b); },
        py::arg("a"), py::arg("b"));

    m.def(
        "encode_head_mask",
        [](const HeadList& heads, int num_layers, int num_heads) {
            return io::encode_head_mask(export_head_mask(to_heads(heads), num_layers, num_heads));
        },
        py::arg("heads"), py::arg("num_layers"), py::arg("num_heads"));
    m.def(
        "decode_head_mask",
        [](const std::string& bytes, bool strict) { return to_pairs(io::decode_head_mask(bytes, strict).mask); },
        py::arg("data"), py::arg("strict") = true);

    m.def(
        "canonical_manifest", [](const std::string& bytes) { return io::write_manifest(io::read_manifest(bytes)); },
        py::arg("data"), "Validates manifest JSON and returns its canonical serialization.");
    m.def(
        "load_manifest", [](const fs::path& run) { return io::write_manifest(io::load_manifest(run)); },
        py::arg("run_dir"));
    m.def(
        "read_step_attention",
        [](const fs::path& run, std::size_t step) {
            return from_record(io::read_step_attention(run, io::load_manifest(run), step));
        },
        py::arg("run_dir"), py::arg("step"), "Step tensor as (layers, heads, tokens), patch row-major order.");
    m.def(
        "write_step_attention",
        [](const fs::path& run, std::size_t step, const Array& attn) {
            io::write_step_attention(run, to_record(attn, step));
        },
        py::arg("run_dir"), py::arg("step"), py::arg("attn"), "Writes a step tensor given in visual-token order.");
    m.def(
        "read_entropy_trace", [](const fs::path& run) { return io::read_entropy_trace(run).entropies; },
        py::arg("run_dir"));
    m.def(
        "write_entropy_trace",
        [](const fs::path& run, const std::vector<double>& e) { io::write_entropy_trace(run, EntropyTrace{e}); },
        py::arg("run_dir"), py::arg("entropies"));

    m.def(
        "write_synthetic_run",
        [](const fs::path& run, int num_layers, int num_heads, int grid_h, int grid_w, std::pair<int, int> planted,
           const std::vector<std::size_t>& targets, double q, std::uint64_t seed,
           std::optional<std::size_t> trigger_step) {
            synth::SynthRun r;
            r.plant.topology.num_layers = num_layers;
            r.plant.topology.num_heads = num_heads;
            r.plant.topology.grid = make_grid(grid_h * 28, grid_w * 28, 28);
            r.plant.planted_head = {planted.first, planted.second};
            r.plant.target_patches = targets;
            r.plant.q = q;
            r.plant.seed = seed;
            r.trigger_step = trigger_step;
            return io::write_manifest(synth::write_synthetic_run(run, r));
        },
        py::arg("run_dir"), py::arg("num_layers"), py::arg("num_heads"), py::arg("grid_h"), py::arg("grid_w"),
        py::arg("planted"), py::arg("targets"), py::kw_only(), py::arg("q") = 1.0, py::arg("seed") = 0,
        py::arg("trigger_step") = std::optional<std::size_t>(3),
        "Writes a run directory with one planted head; returns the manifest JSON.");

    m.attr("FORMAT_VERSION") = io::kFormatVersion;
}
