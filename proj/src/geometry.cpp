#include "verlab/geometry.hpp"

#include <algorithm>

#include "binary_util.hpp"
#include "json_util.hpp"
#include "verlab/error.hpp"

namespace verlab {

long long PatchGrid::patch_area(int i, int j) const noexcept {
    const auto [y0, y1] = row_extent(i);
    const auto [x0, x1] = col_extent(j);
    return static_cast<long long>(y1 - y0) * (x1 - x0);
}

std::pair<int, int> PatchGrid::row_extent(int i) const noexcept {
    return {i * patch_size_px, std::min((i + 1) * patch_size_px, image_h)};
}

std::pair<int, int> PatchGrid::col_extent(int j) const noexcept {
    return {j * patch_size_px, std::min((j + 1) * patch_size_px, image_w)};
}

PatchGrid make_grid(int image_h, int image_w, int patch_size_px) {
    if (image_h < 1 || image_w < 1 || patch_size_px < 1) {
        throw ConfigError("make_grid: image dimensions and patch size must be >= 1");
    }
    PatchGrid g;
    g.patch_size_px = patch_size_px;
    g.image_h = image_h;
    g.image_w = image_w;
    g.grid_h = (image_h + patch_size_px - 1) / patch_size_px;
    g.grid_w = (image_w + patch_size_px - 1) / patch_size_px;
    return g;
}

CoverageWeights coverage_weights(const EvidenceMask& mask, const PatchGrid& grid) {
    if (mask.height != grid.image_h || mask.width != grid.image_w) {
        throw ShapeError("coverage_weights: mask is " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width) + " but grid expects " + std::to_string(grid.image_h) + "x" +
                         std::to_string(grid.image_w));
    }
    CoverageWeights out;
    out.grid_h = grid.grid_h;
    out.grid_w = grid.grid_w;
    out.evidence_counts.assign(grid.patch_count(), 0);
    out.weights.assign(grid.patch_count(), 0.0);

    // Accumulate each mask row into its patch row; integer counts keep the result exact.
    for (int y = 0; y < mask.height; ++y) {
        const int i = y / grid.patch_size_px;
        const auto* row = mask.mask.data() + static_cast<std::size_t>(y) * mask.width;
        auto* counts = out.evidence_counts.data() + static_cast<std::size_t>(i) * grid.grid_w;
        for (int x = 0; x < mask.width; ++x) {
            counts[x / grid.patch_size_px] += row[x];
        }
    }
    for (int i = 0; i < grid.grid_h; ++i) {
        for (int j = 0; j < grid.grid_w; ++j) {
            const auto idx = static_cast<std::size_t>(i) * grid.grid_w + j;
            out.weights[idx] = static_cast<double>(out.evidence_counts[idx]) / static_cast<double>(grid.patch_area(i, j));
        }
    }
    return out;
}

EvidenceStats evidence_ratio(const EvidenceMask& mask) {
    if (mask.mask.empty()) {
        throw InputError("evidence_ratio: empty mask");
    }
    EvidenceStats s;
    s.evidence_pixel_count = static_cast<long long>(mask.popcount());
    s.total_pixels = static_cast<long long>(mask.mask.size());
    s.rho = static_cast<double>(s.evidence_pixel_count) / static_cast<double>(s.total_pixels);
    return s;
}

std::string encode_coverage(const CoverageWeights& weights, int patch_size_px) {
    detail::json header = {{"format", "verlab-coverage"},
                           {"version", 1},
                           {"dtype", "float32"},
                           {"dims", {weights.grid_h, weights.grid_w}},
                           {"patch_size", patch_size_px}};
    std::string out = detail::compact_dump(header) + "\n";
    detail::append_f32_le(out, weights.weights);
    return out;
}

CoverageWeights decode_coverage(std::string_view bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) {
        throw FormatError("coverage: missing header line");
    }
    const auto header = detail::parse_json(bytes.substr(0, nl), "coverage");
    const auto& dims = detail::require(header, "coverage", "dims");
    if (!dims.is_array() || dims.size() != 2 || !dims[0].is_number_integer() || !dims[1].is_number_integer()) {
        throw FormatError("coverage.dims: expected [grid_h, grid_w]");
    }
    CoverageWeights out;
    out.grid_h = dims[0].get<int>();
    out.grid_w = dims[1].get<int>();
    if (out.grid_h < 0 || out.grid_w < 0) throw FormatError("coverage.dims: negative");
    const auto n = static_cast<std::size_t>(out.grid_h) * static_cast<std::size_t>(out.grid_w);
    out.weights = detail::read_f32_le(bytes.substr(nl + 1), n, "coverage payload");
    return out;
}

}  // namespace verlab
