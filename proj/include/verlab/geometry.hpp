#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "verlab/renderer.hpp"

namespace verlab {

/// Vision-encoder patch grid over an image. Patches are indexed row-major:
/// flat index = i * grid_w + j. Edge patches are clipped to the image.
struct PatchGrid {
    int patch_size_px = 28;
    int grid_h = 0;
    int grid_w = 0;
    int image_h = 0;
    int image_w = 0;

    [[nodiscard]] std::size_t patch_count() const noexcept {
        return static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w);
    }
    /// Clipped pixel count |P_ij|, always >= 1.
    [[nodiscard]] long long patch_area(int i, int j) const noexcept;
    /// Pixel rows [first, second) covered by patch row i.
    [[nodiscard]] std::pair<int, int> row_extent(int i) const noexcept;
    [[nodiscard]] std::pair<int, int> col_extent(int j) const noexcept;

    bool operator==(const PatchGrid&) const = default;
};

PatchGrid make_grid(int image_h, int image_w, int patch_size_px);

/// Per-patch fraction of evidence pixels, grid_h x grid_w row-major.
struct CoverageWeights {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<double> weights;
    std::vector<long long> evidence_counts;  // numerators, kept for exact identities

    [[nodiscard]] double at(int i, int j) const { return weights[static_cast<std::size_t>(i) * grid_w + j]; }
};

CoverageWeights coverage_weights(const EvidenceMask& mask, const PatchGrid& grid);

struct EvidenceStats {
    double rho = 0.0;
    long long evidence_pixel_count = 0;
    long long total_pixels = 0;
};

EvidenceStats evidence_ratio(const EvidenceMask& mask);

/// Float32 LE row-major export with a one-line JSON header.
std::string encode_coverage(const CoverageWeights& weights, int patch_size_px);
CoverageWeights decode_coverage(std::string_view bytes);

}  // namespace verlab
