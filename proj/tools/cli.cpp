#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>

#include "cli_common.hpp"
#include "verlab/error.hpp"

namespace verlab::cli {

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("verlab");
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("VERLAB_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string_view(env) != "off") {
            spdlog::warn("VERLAB_LOG={} is not a log level; keeping info", env);
        } else {
            spdlog::set_level(level);
        }
    }
}

HeadId parse_head(const std::string& s) {
    const auto heads = parse_head_list(s);
    if (heads.size() != 1) throw ConfigError("expected a single layer:head, got '" + s + "'");
    return heads.front();
}

}  // namespace

int run(int argc, char** argv) {
    if (!spdlog::get("verlab")) setup_logging();

    CLI::App app{"Visual evidence retrieval toolkit: render, score heads, retrieve, evaluate"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<int> patch_size;
    std::optional<std::size_t> k, n_patches, workers;
    std::optional<double> delta;
    std::optional<std::string> mode, out, template_id;
    app.add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
    app.add_option("--patch-size", patch_size, "Vision patch size in pixels (default 28)");
    app.add_option("--k", k, "Number of heads to select (default 5)");
    app.add_option("--n-patches", n_patches, "Patches to retrieve (default 20)");
    app.add_option("--delta", delta, "Entropy threshold in nats (default 2.0)");
    app.add_option("--mode", mode, "instruct or reasoning (default reasoning)");
    app.add_option("--workers", workers, "Worker threads (default 1)");
    app.add_option("--out", out, "Output directory");
    app.add_option("--template", template_id, "Prompt template: vera-rag, original, eq6");

    auto* fixtures = app.add_subcommand("fixtures", "Write synthetic QA samples as JSONL");
    std::size_t fx_count = 20, fx_lines = 30;
    std::uint64_t fx_seed = 0;
    std::string fx_dataset = "synthetic";
    fixtures->add_option("--count", fx_count, "Number of samples");
    fixtures->add_option("--lines", fx_lines, "Lines per document");
    fixtures->add_option("--seed", fx_seed, "RNG seed");
    fixtures->add_option("--dataset", fx_dataset, "Dataset name stored in each sample");

    auto* render = app.add_subcommand("render", "Render samples to images, layout sidecars and evidence masks");
    std::string samples_path;
    render->add_option("samples", samples_path, "samples.jsonl")->required()->check(CLI::ExistingFile);

    auto* synth = app.add_subcommand("synth", "Write planted-attention run directories for rendered samples");
    std::string synth_render, synth_planted = "0:0", synth_trigger = "3";
    int synth_layers = 4, synth_heads = 4;
    double synth_q = 1.0;
    std::uint64_t synth_seed = 0;
    bool synth_permute = false;
    std::optional<double> synth_noise;
    synth->add_option("render_dir", synth_render, "Output of `render`")->required()->check(CLI::ExistingDirectory);
    synth->add_option("--layers", synth_layers, "Layers");
    synth->add_option("--heads", synth_heads, "Heads per layer");
    synth->add_option("--planted", synth_planted, "Planted head as layer:head");
    synth->add_option("--q", synth_q, "Mass the planted head puts on evidence patches");
    synth->add_option("--trigger", synth_trigger, "High-entropy step, or 'none'");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_flag("--permute", synth_permute, "Store tokens in a shuffled order with a manifest permutation");
    synth->add_option("--noise", synth_noise, "Dirichlet concentration for distractor heads");

    auto* score = app.add_subcommand("score", "Score every head against evidence masks");
    std::string score_render, score_runs;
    std::size_t score_step = 0;
    score->add_option("render_dir", score_render, "Output of `render`")->required()->check(CLI::ExistingDirectory);
    score->add_option("runs_dir", score_runs, "Directory of run dirs, one per sample")
        ->required()
        ->check(CLI::ExistingDirectory);
    score->add_option("--step", score_step, "Decode step to score");

    auto* retrieve = app.add_subcommand("retrieve", "Entropy-triggered retrieval and augmented prompts");
    std::string ret_render, ret_runs, ret_heads = "auto", ret_score;
    retrieve->add_option("render_dir", ret_render, "Output of `render`")->required()->check(CLI::ExistingDirectory);
    retrieve->add_option("runs_dir", ret_runs, "Directory of run dirs")->required()->check(CLI::ExistingDirectory);
    retrieve->add_option("--heads", ret_heads, "'auto' or layer:head,...");
    retrieve->add_option("--score", ret_score, "report.json from `score`, used by --heads auto");

    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against samples");
    std::string ev_pred, ev_samples;
    evaluate->add_option("predictions", ev_pred, "predictions.jsonl")->required()->check(CLI::ExistingFile);
    evaluate->add_option("samples", ev_samples, "samples.jsonl")->required()->check(CLI::ExistingFile);

    for (auto* sub : {fixtures, render, synth, score, retrieve, evaluate}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kFatal;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) apply_toml(config_path, cfg);
        if (patch_size) cfg.patch_size = *patch_size;
        if (k) cfg.k = *k;
        if (n_patches) cfg.n_patches = *n_patches;
        if (delta) cfg.delta = *delta;
        if (mode) cfg.mode = parse_mode(*mode);
        if (workers) cfg.workers = *workers;
        if (out) cfg.out = *out;
        if (template_id) cfg.template_id = *template_id;
        cfg.validate();
        if (cfg.out.empty()) throw ConfigError("--out is required");

        if (*fixtures) return cmd_fixtures(cfg, fx_count, fx_lines, fx_seed, fx_dataset);
        if (*render) return cmd_render(cfg, samples_path);
        if (*synth) {
            std::optional<std::size_t> trigger;
            if (synth_trigger != "none") {
                try {
                    trigger = std::stoull(synth_trigger);
                } catch (const std::logic_error&) {
                    throw ConfigError("--trigger expects a step number or 'none'");
                }
            }
            return cmd_synth(cfg, synth_render, synth_layers, synth_heads, parse_head(synth_planted), synth_q,
                             trigger, synth_seed, synth_permute, synth_noise);
        }
        if (*score) return cmd_score(cfg, score_render, score_runs, score_step);
        if (*retrieve) return cmd_retrieve(cfg, ret_render, ret_runs, ret_heads, ret_score);
        if (*evaluate) return cmd_evaluate(cfg, ev_pred, ev_samples);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kFatal;
    }
    return kFatal;
}

}  // namespace verlab::cli
