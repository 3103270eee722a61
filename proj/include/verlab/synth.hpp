#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "verlab/analysis.hpp"
#include "verlab/attn_io.hpp"
#include "verlab/evalkit.hpp"
#include "verlab/renderer.hpp"

namespace verlab::synth {

/// One planted head concentrating mass q on a set of target patches.
struct PlantSpec {
    ModelTopology topology;
    HeadId planted_head;
    std::vector<std::size_t> target_patches;  // flat row-major patch indices
    double q = 1.0;
    std::uint64_t seed = 0;
    /// Off by default: distractors are exactly uniform. When set, distractor
    /// heads are drawn from a symmetric Dirichlet with this concentration.
    std::optional<double> dirichlet_alpha;
};

/// Planted head: q / |T| on targets, (1 - q) / (P - |T|) elsewhere.
/// Other heads: 1 / P everywhere (or Dirichlet noise when enabled).
AttentionRecord plant_attention(const PlantSpec& spec, std::size_t step = 0);

/// All steps at low_level except trigger_step at high_level.
EntropyTrace plant_entropy_trace(std::size_t length, std::optional<std::size_t> trigger_step, double low_level,
                                 double high_level);

struct Fixture {
    SourceText source;  // clean text: raw == normalized
    RenderedDocument doc;
    EvidenceMask mask;
    std::vector<std::size_t> evidence_lines;
};

/// Deterministic "line <i>: <words>" text, one rendered line per source line,
/// with evidence spans covering exactly the named lines.
Fixture fixture_document(std::size_t n_lines, const std::vector<std::size_t>& evidence_lines,
                         const RenderConfig& config = {}, std::uint64_t seed = 0);

/// Flat indices of patches with non-zero coverage.
std::vector<std::size_t> evidence_patches(const CoverageWeights& weights);

/// QA samples over fixture documents, each with a single evidence line.
std::vector<eval::QASample> fixture_samples(std::size_t count, std::size_t lines_per_doc, const RenderConfig& config,
                                            std::uint64_t seed, const std::string& dataset = "synthetic");

struct SynthRun {
    PlantSpec plant;
    std::size_t trace_length = 16;
    std::optional<std::size_t> trigger_step = 3;
    double low_entropy = 1e-3;
    double high_entropy = 3.0;
    std::size_t vocab_size = 4096;
    std::string model_id = "synth-oracle";
};

/// Writes a complete run directory (manifest, entropy trace, planted step 0 and
/// trigger-step tensors) through the real attn-io writers.
io::DumpManifest write_synthetic_run(const std::filesystem::path& run_dir, const SynthRun& run);

}  // namespace verlab::synth
