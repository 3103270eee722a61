#include <fmt/format.h>

#include <map>

#include "cli_common.hpp"
#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"

namespace verlab::cli {

namespace {

std::string fmt_score(double v) { return fmt::format("{:.17g}", v); }

std::string render_csv(const ScoreMatrix& avg, const std::vector<HeadId>& top, const VERHeadSet& ver,
                       const std::map<std::string, ScoreMatrix>& per_dataset) {
    std::map<HeadId, std::size_t> rank;
    for (std::size_t r = 0; r < top.size(); ++r) rank[top[r]] = r + 1;
    std::string out = "layer,head,score,top_k_rank,ver_head";
    for (const auto& [name, m] : per_dataset) out += "," + name;
    out += "\n";
    for (int l = 0; l < avg.num_layers; ++l) {
        for (int h = 0; h < avg.num_heads; ++h) {
            const HeadId id{l, h};
            const bool is_ver = std::binary_search(ver.heads.begin(), ver.heads.end(), id);
            out += fmt::format("{},{},{},{},{}", l, h, fmt_score(avg.at(id)),
                               rank.contains(id) ? std::to_string(rank[id]) : "", is_ver ? 1 : 0);
            for (const auto& [name, m] : per_dataset) out += "," + fmt_score(m.at(id));
            out += "\n";
        }
    }
    return out;
}

std::string render_markdown(const ScoreMatrix& avg, const std::vector<HeadId>& top, const VERHeadSet& ver,
                             bool threshold_ok, std::size_t scored, std::size_t skipped, const json& spearman) {
    std::string out = "# VER head report\n\n";
    out += fmt::format("Samples scored: {}. Skipped (rho = 0): {}.\n\n", scored, skipped);
    out += "| rank | layer | head | score |\n|---:|---:|---:|---:|\n";
    for (std::size_t r = 0; r < top.size(); ++r) {
        out += fmt::format("| {} | {} | {} | {:.6f} |\n", r + 1, top[r].layer, top[r].head, avg.at(top[r]));
    }
    if (threshold_ok) {
        out += fmt::format("\nThreshold tau = {:.6f}; {} of {} heads above it.\n", ver.tau, ver.heads.size(),
                           avg.values.size());
    } else {
        out += "\nThreshold undefined: all averaged scores are equal.\n";
    }
    const auto& names = spearman.at("datasets");
    if (names.size() > 1) {
        out += "\n## Spearman correlation between datasets\n\n|  |";
        for (const auto& n : names) out += " " + n.get<std::string>() + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < names.size(); ++i) out += "---:|";
        out += "\n";
        for (std::size_t i = 0; i < names.size(); ++i) {
            out += "| " + names[i].get<std::string>() + " |";
            for (const auto& v : spearman.at("matrix")[i]) {
                out += v.is_null() ? " n/a |" : fmt::format(" {:.4f} |", v.get<double>());
            }
            out += "\n";
        }
    }
    return out;
}

/// Gnuplot matrix blocks: "layer head score", one block per layer.
std::string render_dat(const ScoreMatrix& avg) {
    std::string out = "# layer head score\n";
    for (int l = 0; l < avg.num_layers; ++l) {
        for (int h = 0; h < avg.num_heads; ++h) out += fmt::format("{} {} {}\n", l, h, fmt_score(avg.at({l, h})));
        out += "\n";
    }
    return out;
}

}  // namespace

int cmd_score(const RunConfig& cfg, const fs::path& render_dir, const fs::path& runs_dir, std::size_t step) {
    const auto ids = rendered_ids(render_dir);
    std::vector<std::string> datasets(ids.size());
    std::vector<std::optional<ScoreMatrix>> normalized(ids.size());

    const auto outcomes = run_pool(ids, cfg.workers, [&](std::size_t i) {
        SampleOutcome o;
        o.id = ids[i];
        const auto rs = load_rendered_sample(render_dir / "samples" / o.id);
        const fs::path run = runs_dir / o.id;
        const auto manifest = io::load_manifest(run);
        if (manifest.grid_h != rs.coverage.grid_h || manifest.grid_w != rs.coverage.grid_w) {
            throw ShapeError(fmt::format("run grid {}x{} does not match rendered grid {}x{}", manifest.grid_h,
                                         manifest.grid_w, rs.coverage.grid_h, rs.coverage.grid_w));
        }
        if (!(rs.stats.rho > 0.0)) {
            o.record = {{"skipped", "rho = 0"}};
            return o;
        }
        if (!manifest.has_step(step)) {
            throw MissingStepError(fmt::format("sample {}: step {} not recorded in {}", o.id, step, run.string()));
        }
        const auto rec = io::read_step_attention(run, manifest, step);
        const auto table = head_scores(rec, rs.coverage, rs.stats);
        write_json(cfg.out / "samples" / (o.id + ".json"), {{"id", o.id},
                                                            {"step", step},
                                                            {"rho", table.rho},
                                                            {"raw", matrix_to_json(table.raw)},
                                                            {"normalized", matrix_to_json(table.normalized)}});
        datasets[i] = rs.sample.dataset.empty() ? "default" : rs.sample.dataset;
        normalized[i] = table.normalized;
        return o;
    });

    std::vector<ScoreMatrix> all;
    std::map<std::string, std::vector<ScoreMatrix>> by_dataset;
    std::size_t skipped = 0;
    json scored_ids = json::array();
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].error) {
            spdlog::warn("sample {}: {}", outcomes[i].id, *outcomes[i].error);
        } else if (!normalized[i]) {
            ++skipped;
        } else {
            all.push_back(*normalized[i]);
            by_dataset[datasets[i]].push_back(*normalized[i]);
            scored_ids.push_back(ids[i]);
        }
    }
    if (skipped) spdlog::warn("skipped {} samples with zero evidence ratio", skipped);
    if (all.empty()) throw InputError("score: no sample could be scored");

    const ScoreMatrix avg = average_matrices(all);
    const auto top = top_k_heads(avg, cfg.k);
    VERHeadSet ver;
    bool threshold_ok = true;
    try {
        ver = identify_ver_heads(avg);
    } catch (const DegenerateThresholdError& e) {
        spdlog::warn("{}", e.what());
        threshold_ok = false;
    }

    std::map<std::string, ScoreMatrix> per_dataset;
    json per_dataset_json = json::object();
    for (const auto& [name, ms] : by_dataset) {
        per_dataset[name] = average_matrices(ms);
        per_dataset_json[name] = {{"samples", ms.size()}, {"average", matrix_to_json(per_dataset[name])}};
    }
    json names = json::array(), rho_matrix = json::array();
    for (const auto& [a, ma] : per_dataset) {
        names.push_back(a);
        json row = json::array();
        for (const auto& [b, mb] : per_dataset) {
            try {
                row.push_back(spearman_correlation(ma, mb));
            } catch (const InputError&) {
                row.push_back(nullptr);
            }
        }
        rho_matrix.push_back(std::move(row));
    }
    const json spearman = {{"datasets", names}, {"matrix", rho_matrix}};

    json top_json = json::array(), ver_json = json::array();
    for (const auto& h : top) top_json.push_back(head_to_json(h));
    for (const auto& h : ver.heads) ver_json.push_back(head_to_json(h));
    const json report = {{"step", step},
                         {"k", cfg.k},
                         {"num_layers", avg.num_layers},
                         {"num_heads", avg.num_heads},
                         {"samples_scored", scored_ids},
                         {"skipped_rho_zero", skipped},
                         {"failures", failures_json(outcomes)},
                         {"average", matrix_to_json(avg)},
                         {"per_dataset", per_dataset_json},
                         {"top_k", top_json},
                         {"tau", threshold_ok ? json(ver.tau) : json(nullptr)},
                         {"ver_heads", ver_json},
                         {"spearman", spearman}};
    write_json(cfg.out / "report.json", report);
    io::write_file(cfg.out / "report.csv", render_csv(avg, top, ver, per_dataset));
    io::write_file(cfg.out / "report.md",
                   render_markdown(avg, top, ver, threshold_ok, all.size(), skipped, spearman));
    io::write_file(cfg.out / "scores.dat", render_dat(avg));
    io::write_file(cfg.out / io::kHeadMaskFile, io::encode_head_mask(export_head_mask(top, avg.num_layers,
                                                                                     avg.num_heads)));
    spdlog::info("scored {} samples; top head ({}, {})", all.size(), top.front().layer, top.front().head);
    return failure_count(outcomes) ? kPartial : kOk;
}

}  // namespace verlab::cli
