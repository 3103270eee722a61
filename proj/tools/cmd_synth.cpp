#include <algorithm>
#include <numeric>
#include <random>

#include "cli_common.hpp"
#include "verlab/error.hpp"
#include "verlab/geometry.hpp"
#include "verlab/synth.hpp"

namespace verlab::cli {

int cmd_synth(const RunConfig& cfg, const fs::path& render_dir, int layers, int heads, HeadId planted, double q,
              std::optional<std::size_t> trigger, std::uint64_t seed, bool permute, std::optional<double> noise) {
    const auto ids = rendered_ids(render_dir);
    const auto outcomes = run_pool(ids, cfg.workers, [&](std::size_t i) {
        SampleOutcome o;
        o.id = ids[i];
        const auto rs = load_rendered_sample(render_dir / "samples" / o.id);
        synth::SynthRun run;
        auto& topo = run.plant.topology;
        topo.num_layers = layers;
        topo.num_heads = heads;
        topo.grid = make_grid(rs.layout.height, rs.layout.width, rs.patch_size);
        if (topo.grid.grid_h != rs.coverage.grid_h || topo.grid.grid_w != rs.coverage.grid_w) {
            throw ShapeError("coverage grid does not match the rendered image");
        }
        const std::uint64_t sample_seed = seed + i;
        if (permute) {
            topo.token_to_patch.resize(topo.visual_token_count());
            std::iota(topo.token_to_patch.begin(), topo.token_to_patch.end(), std::size_t{0});
            std::mt19937_64 rng(sample_seed ^ 0x9e3779b97f4a7c15ULL);
            std::shuffle(topo.token_to_patch.begin(), topo.token_to_patch.end(), rng);
        }
        run.plant.planted_head = planted;
        run.plant.target_patches = synth::evidence_patches(rs.coverage);
        run.plant.q = q;
        run.plant.seed = sample_seed;
        run.plant.dirichlet_alpha = noise;
        run.trigger_step = trigger;
        if (trigger && *trigger >= run.trace_length) run.trace_length = *trigger + 1;
        const auto m = synth::write_synthetic_run(cfg.out / o.id, run);
        o.record = {{"targets", run.plant.target_patches.size()}, {"steps", m.recorded_steps}};
        return o;
    });
    for (const auto& o : outcomes) {
        if (o.error) spdlog::warn("sample {}: {}", o.id, *o.error);
    }
    json runs = json::array();
    for (const auto& o : outcomes) {
        if (!o.error) runs.push_back(o.id);
    }
    const json report = {{"runs", runs},
                         {"failures", failures_json(outcomes)},
                         {"planted_head", head_to_json(planted)},
                         {"q", q},
                         {"num_layers", layers},
                         {"num_heads", heads},
                         {"trigger_step", trigger ? json(*trigger) : json(nullptr)},
                         {"seed", seed},
                         {"permuted", permute}};
    write_json(cfg.out / "synth_report.json", report);
    spdlog::info("wrote {} synthetic runs into {}", runs.size(), cfg.out.string());
    return failure_count(outcomes) ? kPartial : kOk;
}

}  // namespace verlab::cli
