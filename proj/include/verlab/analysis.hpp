#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "verlab/geometry.hpp"

namespace verlab {

struct HeadId {
    int layer = 0;
    int head = 0;

    auto operator<=>(const HeadId&) const = default;
};

/// Layer/head counts plus the patch grid the visual tokens live on.
/// token_to_patch[t] is the flat patch index of visual token t; empty means identity.
struct ModelTopology {
    int num_layers = 0;
    int num_heads = 0;
    PatchGrid grid;
    std::vector<std::size_t> token_to_patch;

    [[nodiscard]] std::size_t visual_token_count() const noexcept { return grid.patch_count(); }
    [[nodiscard]] std::size_t head_count() const noexcept {
        return static_cast<std::size_t>(num_layers) * static_cast<std::size_t>(num_heads);
    }
    [[nodiscard]] bool contains(HeadId h) const noexcept {
        return h.layer >= 0 && h.layer < num_layers && h.head >= 0 && h.head < num_heads;
    }
    /// Throws FormatError if token_to_patch is not a bijection onto the grid.
    void validate() const;
};

/// One decode step's attention over visual tokens for every (layer, head).
/// Stored layer-major, head-minor, tokens in patch row-major order.
struct AttentionRecord {
    std::size_t step = 0;
    int num_layers = 0;
    int num_heads = 0;
    std::size_t tokens = 0;
    std::vector<double> attn;

    AttentionRecord() = default;
    AttentionRecord(std::size_t step, int layers, int heads, std::size_t tokens);

    [[nodiscard]] std::span<const double> head(HeadId h) const;
    [[nodiscard]] std::span<double> head(HeadId h);
    /// Non-negative, finite, per-head sums <= 1 + tolerance.
    void validate(double sum_tolerance = 1e-4) const;
};

/// L x H matrix of per-head values, layer-major.
struct ScoreMatrix {
    int num_layers = 0;
    int num_heads = 0;
    std::vector<double> values;

    ScoreMatrix() = default;
    ScoreMatrix(int layers, int heads, double fill = 0.0)
        : num_layers(layers), num_heads(heads), values(static_cast<std::size_t>(layers) * heads, fill) {}

    [[nodiscard]] double at(HeadId h) const { return values[static_cast<std::size_t>(h.layer) * num_heads + h.head]; }
    double& at(HeadId h) { return values[static_cast<std::size_t>(h.layer) * num_heads + h.head]; }
    bool operator==(const ScoreMatrix&) const = default;
};

struct HeadScoreTable {
    ScoreMatrix raw;         // R per head
    ScoreMatrix normalized;  // R / rho
    double rho = 0.0;
};

struct VERHeadSet {
    std::vector<HeadId> heads;  // sorted by (layer, head)
    double tau = 0.0;
};

struct EntropyTrace {
    std::vector<double> entropies;  // nats, one per generated token
};

struct RetrievalMoment {
    std::optional<std::size_t> t_star;
    double delta = 2.0;
};

/// Canonical list of heads to zero out during a forward pass.
struct HeadMaskSpec {
    std::vector<HeadId> mask;  // sorted, deduplicated
    bool operator==(const HeadMaskSpec&) const = default;
};

/// r_ij = w_ij * A_ij for one head's attention laid out on the grid.
std::vector<double> patch_scores(std::span<const double> head_attn, const CoverageWeights& weights);

/// R per head (sum of patch scores) and R / rho. rho == 0 throws NormalizationError.
HeadScoreTable head_scores(const AttentionRecord& record, const CoverageWeights& weights, const EvidenceStats& stats);

/// Heads with normalized score strictly above the midpoint of the score range.
VERHeadSet identify_ver_heads(const HeadScoreTable& table);
VERHeadSet identify_ver_heads(const ScoreMatrix& normalized);

/// Per-head mean of the normalized scores of several samples.
ScoreMatrix average_head_scores(std::span<const HeadScoreTable> tables);
ScoreMatrix average_matrices(std::span<const ScoreMatrix> matrices);

/// k best heads by descending score; ties go to the lower (layer, head).
std::vector<HeadId> top_k_heads(const ScoreMatrix& scores, std::size_t k);

/// Shannon entropy in nats; 0 * ln 0 is taken as 0.
double token_entropy(std::span<const double> probs);
/// Entropy of softmax(logits), computed stably.
double entropy_from_logits(std::span<const double> logits);

/// First step whose entropy strictly exceeds delta.
RetrievalMoment first_high_entropy_step(const EntropyTrace& trace, double delta = 2.0);

/// Average (fractional) ranks, 1-based.
std::vector<double> fractional_ranks(std::span<const double> values);
double spearman_correlation(std::span<const double> a, std::span<const double> b);
double spearman_correlation(const ScoreMatrix& a, const ScoreMatrix& b);

HeadMaskSpec export_head_mask(std::span<const HeadId> heads, int num_layers, int num_heads);

}  // namespace verlab
