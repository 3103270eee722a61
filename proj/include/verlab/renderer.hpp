#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verlab {

/// Monospace cell renderer configuration. Defaults follow a 595x842 page with
/// 10px margins and 10px line height; cell width is our own parameter.
struct RenderConfig {
    int page_width_px = 595;
    int page_height_px = 842;
    int margin_x = 10;
    int margin_y = 10;
    int char_width_px = 6;
    int line_height_px = 10;
    std::uint8_t ink_value = 0;
    std::uint8_t background_value = 255;

    /// Throws ConfigError when an invariant does not hold.
    void validate() const;

    /// Usable cells per line; 0 when the page is too narrow.
    [[nodiscard]] int cells_per_line() const noexcept;
    [[nodiscard]] int lines_per_page() const noexcept;

    bool operator==(const RenderConfig&) const = default;
};

/// Half-open source range [char_start, char_end).
struct EvidenceSpan {
    std::size_t char_start = 0;
    std::size_t char_end = 0;

    bool operator==(const EvidenceSpan&) const = default;
};

struct SourceText {
    std::string text;
    std::vector<EvidenceSpan> spans;
};

/// Normalized text plus the map from raw offsets to normalized offsets.
/// raw_to_norm has raw.size() + 1 entries; entry r is the normalized index of
/// the first surviving character at raw offset >= r.
struct NormalizedText {
    std::string text;
    std::vector<std::size_t> raw_to_norm;

    [[nodiscard]] EvidenceSpan map_span(const EvidenceSpan& raw) const;
};

/// Collapses space/tab runs, keeps newlines, strips trailing whitespace per line
/// and at the end of the document. CR and CRLF become LF.
NormalizedText normalize_whitespace(std::string_view raw);

struct LineRecord {
    std::size_t line_index = 0;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    int y_top = 0;
    int y_bottom = 0;
    int x_left = 0;

    [[nodiscard]] std::size_t size() const noexcept { return char_end - char_start; }
    bool operator==(const LineRecord&) const = default;
};

/// 8-bit luminance raster, row-major.
struct Raster {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Raster() = default;
    Raster(int h, int w, std::uint8_t fill);

    [[nodiscard]] std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const Raster&) const = default;
};

/// Geometry of a rendered document without the pixels. This is what the layout
/// sidecar stores and what row expansion needs.
struct DocumentLayout {
    std::string text;  // normalized source
    std::vector<LineRecord> lines;
    RenderConfig config;
    int height = 0;
    int width = 0;
    int page_count = 0;
};

struct RenderedDocument {
    DocumentLayout layout;
    Raster image;

    [[nodiscard]] int height() const noexcept { return layout.height; }
    [[nodiscard]] int width() const noexcept { return layout.width; }
};

struct EvidenceBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;  // exclusive
    int y_max = 0;  // exclusive

    [[nodiscard]] long long area() const noexcept {
        return static_cast<long long>(x_max - x_min) * (y_max - y_min);
    }
    bool operator==(const EvidenceBox&) const = default;
};

/// Binary pixel mask, row-major, values in {0, 1}.
struct EvidenceMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> mask;

    EvidenceMask() = default;
    EvidenceMask(int h, int w) : height(h), width(w), mask(static_cast<std::size_t>(h) * w, 0) {}

    [[nodiscard]] std::uint8_t at(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] std::size_t popcount() const noexcept;
    bool operator==(const EvidenceMask&) const = default;
};

/// Greedy word wrap of already-normalized text into cell lines. Lines fill pages
/// top to bottom; pages are stacked vertically.
std::vector<LineRecord> layout_lines(std::string_view normalized, const RenderConfig& config);

/// Normalizes `raw`, lays it out and computes the cropped page geometry.
DocumentLayout layout(std::string_view raw, const RenderConfig& config);

/// Full render: layout plus 5x7 dot glyphs painted into each character cell.
RenderedDocument render(std::string_view raw, const RenderConfig& config);

/// Paints one cell glyph into `image`. Exposed so tests can build glyph stamps.
void draw_glyph(Raster& image, int x0, int y0, unsigned char ch, const RenderConfig& config);

/// Spans are in normalized coordinates; text_length bounds them.
std::vector<EvidenceBox> evidence_boxes(std::span<const LineRecord> lines,
                                        std::span<const EvidenceSpan> spans,
                                        std::size_t text_length,
                                        const RenderConfig& config);

std::vector<EvidenceBox> evidence_boxes(const DocumentLayout& doc, std::span<const EvidenceSpan> spans);

EvidenceMask evidence_mask(std::span<const EvidenceBox> boxes, int height, int width);

/// Debug-only: tints evidence boxes so they stand out. Never used for masks or layout.
Raster highlight_evidence(const Raster& image, std::span<const EvidenceBox> boxes, std::uint8_t shade = 128);

// Raster output. PGM (P5) is the canonical bit-exact format.
std::string encode_pgm(const Raster& image);
Raster decode_pgm(std::string_view bytes);
std::string encode_png(const Raster& image);

Raster mask_to_raster(const EvidenceMask& mask);
EvidenceMask raster_to_mask(const Raster& raster);

/// Layout sidecar JSON (config, page count, every LineRecord).
std::string layout_to_json(const DocumentLayout& doc);
/// Reads a sidecar back; `text` must be supplied separately since the sidecar does not carry it.
DocumentLayout layout_from_json(std::string_view json, std::string text);

}  // namespace verlab
