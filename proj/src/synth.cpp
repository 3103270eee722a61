#include "verlab/synth.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "verlab/error.hpp"
#include "verlab/geometry.hpp"

namespace verlab::synth {

namespace {

constexpr std::array<std::string_view, 24> kWords = {
    "alpha", "river", "stone", "amber", "cobalt", "meadow", "signal", "harbor", "lantern", "orbit", "quartz", "willow",
    "falcon", "copper", "summit", "velvet", "prism", "tundra", "ember", "glacier", "marble", "cedar", "nectar", "pixel"};

}  // namespace

AttentionRecord plant_attention(const PlantSpec& spec, std::size_t step) {
    const auto& topo = spec.topology;
    if (topo.num_layers < 1 || topo.num_heads < 1) {
        throw InputError("plant_attention: topology needs at least one layer and head");
    }
    if (!topo.contains(spec.planted_head)) {
        throw RangeError("plant_attention: planted head outside topology");
    }
    if (!(spec.q >= 0.0 && spec.q <= 1.0)) {
        throw InputError("plant_attention: q must lie in [0, 1]");
    }
    const std::size_t P = topo.visual_token_count();
    if (P == 0) throw InputError("plant_attention: empty grid");
    std::set<std::size_t> targets(spec.target_patches.begin(), spec.target_patches.end());
    for (auto t : targets) {
        if (t >= P) throw RangeError("plant_attention: target patch " + std::to_string(t) + " outside grid");
    }
    if (targets.empty() && spec.q > 0.0) {
        throw InputError("plant_attention: q > 0 needs at least one target patch");
    }
    if (targets.size() == P && spec.q < 1.0) {
        throw InputError("plant_attention: targets cover the grid, so q must be 1");
    }

    AttentionRecord rec(step, topo.num_layers, topo.num_heads, P);
    std::mt19937_64 rng(spec.seed);
    for (int l = 0; l < topo.num_layers; ++l) {
        for (int h = 0; h < topo.num_heads; ++h) {
            auto a = rec.head({l, h});
            if (HeadId{l, h} == spec.planted_head) continue;
            if (spec.dirichlet_alpha) {
                std::gamma_distribution<double> gamma(*spec.dirichlet_alpha, 1.0);
                double sum = 0.0;
                for (double& v : a) sum += (v = gamma(rng));
                for (double& v : a) v /= sum;
            } else {
                std::fill(a.begin(), a.end(), 1.0 / static_cast<double>(P));
            }
        }
    }
    auto planted = rec.head(spec.planted_head);
    if (targets.empty()) {
        std::fill(planted.begin(), planted.end(), 1.0 / static_cast<double>(P));
    } else {
        const double on = spec.q / static_cast<double>(targets.size());
        const double off = targets.size() == P ? 0.0 : (1.0 - spec.q) / static_cast<double>(P - targets.size());
        std::fill(planted.begin(), planted.end(), off);
        for (auto t : targets) planted[t] = on;
    }
    return rec;
}

EntropyTrace plant_entropy_trace(std::size_t length, std::optional<std::size_t> trigger_step, double low_level,
                                 double high_level) {
    if (low_level < 0.0 || high_level < 0.0) {
        throw InputError("plant_entropy_trace: entropy levels must be >= 0");
    }
    if (trigger_step && *trigger_step >= length) {
        throw InputError("plant_entropy_trace: trigger step beyond trace length");
    }
    EntropyTrace trace;
    trace.entropies.assign(length, low_level);
    if (trigger_step) trace.entropies[*trigger_step] = high_level;
    return trace;
}

Fixture fixture_document(std::size_t n_lines, const std::vector<std::size_t>& evidence_lines,
                         const RenderConfig& config, std::uint64_t seed) {
    config.validate();
    const auto cells = static_cast<std::size_t>(config.cells_per_line());
    if (n_lines == 0) throw InputError("fixture_document: need at least one line");
    for (auto e : evidence_lines) {
        if (e >= n_lines) throw RangeError("fixture_document: evidence line " + std::to_string(e) + " >= n_lines");
    }
    const std::string widest_prefix = "line " + std::to_string(n_lines - 1) + ":";
    if (cells < widest_prefix.size() + 6) {
        throw ConfigError("fixture_document: lines too narrow for fixture text");
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, kWords.size() - 1);
    std::uniform_int_distribution<int> count(3, 8);

    Fixture fx;
    std::vector<std::pair<std::size_t, std::size_t>> line_ranges;
    std::string& text = fx.source.text;
    for (std::size_t i = 0; i < n_lines; ++i) {
        if (i > 0) text.push_back('\n');
        std::string line = "line " + std::to_string(i) + ":";
        const int words = count(rng);
        for (int w = 0; w < words; ++w) {
            const auto word = kWords[pick(rng)];
            if (line.size() + 1 + word.size() > cells) break;
            line.push_back(' ');
            line.append(word);
        }
        line_ranges.emplace_back(text.size(), text.size() + line.size());
        text += line;
    }

    std::set<std::size_t> ev(evidence_lines.begin(), evidence_lines.end());
    fx.evidence_lines.assign(ev.begin(), ev.end());
    for (auto e : fx.evidence_lines) fx.source.spans.push_back({line_ranges[e].first, line_ranges[e].second});

    fx.doc = render(fx.source.text, config);
    const auto boxes = evidence_boxes(fx.doc.layout, fx.source.spans);
    fx.mask = evidence_mask(boxes, fx.doc.height(), fx.doc.width());
    return fx;
}

std::vector<std::size_t> evidence_patches(const CoverageWeights& weights) {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < weights.weights.size(); ++p) {
        if (weights.weights[p] > 0.0) out.push_back(p);
    }
    return out;
}

std::vector<eval::QASample> fixture_samples(std::size_t count, std::size_t lines_per_doc, const RenderConfig& config,
                                            std::uint64_t seed, const std::string& dataset) {
    std::vector<eval::QASample> out;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_line(0, lines_per_doc - 1);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t line = pick_line(rng);
        const auto fx = fixture_document(lines_per_doc, {line}, config, rng());
        eval::QASample q;
        q.id = dataset + "-" + std::to_string(s);
        q.dataset = dataset;
        q.context = fx.source.text;
        q.gold_spans = fx.source.spans;
        const auto& span = fx.source.spans.front();
        const std::string line_text = q.context.substr(span.char_start, span.char_end - span.char_start);
        const auto colon = line_text.find(':');
        q.question = "Which words are written on line " + std::to_string(line) + "?";
        q.gold_answers.push_back(colon != std::string::npos && colon + 2 < line_text.size() ? line_text.substr(colon + 2)
                                                                                   : line_text);
        q.answer_kind = eval::AnswerKind::Extractive;
        out.push_back(std::move(q));
    }
    return out;
}

io::DumpManifest write_synthetic_run(const std::filesystem::path& run_dir, const SynthRun& run) {
    const auto& topo = run.plant.topology;
    io::DumpManifest m;
    m.model_id = run.model_id;
    m.num_layers = topo.num_layers;
    m.num_heads = topo.num_heads;
    m.visual_token_count = topo.visual_token_count();
    m.patch_size_px = topo.grid.patch_size_px;
    m.grid_h = topo.grid.grid_h;
    m.grid_w = topo.grid.grid_w;
    m.vocab_size = run.vocab_size;

    std::set<std::size_t> steps = {0};
    if (run.trigger_step) steps.insert(*run.trigger_step);
    const auto trace = plant_entropy_trace(run.trace_length, run.trigger_step, run.low_entropy, run.high_entropy);

    for (auto step : steps) {
        AttentionRecord rec = plant_attention(run.plant, step);
        if (!topo.token_to_patch.empty()) {
            // Store in model token order so readers exercise the permutation.
            AttentionRecord tokens = rec;
            for (std::size_t base = 0; base < rec.attn.size(); base += rec.tokens) {
                for (std::size_t t = 0; t < rec.tokens; ++t) {
                    tokens.attn[base + t] = rec.attn[base + topo.token_to_patch[t]];
                }
            }
            rec = std::move(tokens);
        }
        io::write_step_attention(run_dir, rec);
        m.recorded_steps.push_back(step);
        m.files[step] = io::step_file_name(step);
    }
    if (!topo.token_to_patch.empty()) m.token_to_patch = topo.token_to_patch;
    io::write_entropy_trace(run_dir, trace);
    io::save_manifest(run_dir, m);
    return m;
}

}  // namespace verlab::synth
