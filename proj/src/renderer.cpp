#include "verlab/renderer.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <limits>

#include "glyphs.hpp"
#include "json_util.hpp"
#include "verlab/error.hpp"

namespace verlab {

namespace {

constexpr std::size_t kDropped = std::numeric_limits<std::size_t>::max();

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\v' || c == '\f'; }

}  // namespace

void RenderConfig::validate() const {
    if (page_width_px <= 2 * margin_x) {
        throw ConfigError("render config: page_width_px must exceed 2*margin_x");
    }
    if (page_height_px <= 2 * margin_y) {
        throw ConfigError("render config: page_height_px must exceed 2*margin_y");
    }
    if (margin_x < 0 || margin_y < 0) {
        throw ConfigError("render config: margins must be non-negative");
    }
    if (char_width_px < 1) {
        throw ConfigError("render config: char_width_px must be >= 1");
    }
    if (line_height_px < 1) {
        throw ConfigError("render config: line_height_px must be >= 1");
    }
    if (ink_value == background_value) {
        throw ConfigError("render config: ink_value must differ from background_value");
    }
}

int RenderConfig::cells_per_line() const noexcept {
    if (char_width_px < 1) return 0;
    return std::max(0, (page_width_px - 2 * margin_x) / char_width_px);
}

int RenderConfig::lines_per_page() const noexcept {
    if (line_height_px < 1) return 0;
    return std::max(0, (page_height_px - 2 * margin_y) / line_height_px);
}

EvidenceSpan NormalizedText::map_span(const EvidenceSpan& raw) const {
    if (raw.char_end >= raw_to_norm.size() || raw.char_start > raw.char_end) {
        throw RangeError("span [" + std::to_string(raw.char_start) + ", " + std::to_string(raw.char_end) +
                         ") outside source of length " + std::to_string(raw_to_norm.size() - 1));
    }
    return {raw_to_norm[raw.char_start], raw_to_norm[raw.char_end]};
}

NormalizedText normalize_whitespace(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    std::vector<std::size_t> kept(raw.size(), kDropped);
    std::vector<std::size_t> norm_to_raw;
    norm_to_raw.reserve(raw.size());

    auto emit = [&](char c, std::size_t r) {
        kept[r] = out.size();
        out.push_back(c);
        norm_to_raw.push_back(r);
    };

    std::size_t run_start = kDropped;
    for (std::size_t r = 0; r < raw.size(); ++r) {
        char c = raw[r];
        if (is_blank(c)) {
            if (run_start == kDropped) run_start = r;
            continue;
        }
        if (c == '\r') {
            if (r + 1 < raw.size() && raw[r + 1] == '\n') continue;
            c = '\n';
        }
        if (run_start != kDropped) {
            // A blank run right before a newline is trailing whitespace.
            if (c != '\n') emit(' ', run_start);
            run_start = kDropped;
        }
        emit(c, r);
    }
    while (!out.empty() && out.back() == '\n') {
        kept[norm_to_raw.back()] = kDropped;
        out.pop_back();
        norm_to_raw.pop_back();
    }

    NormalizedText result;
    result.raw_to_norm.assign(raw.size() + 1, out.size());
    for (std::size_t r = raw.size(); r-- > 0;) {
        result.raw_to_norm[r] = kept[r] != kDropped ? kept[r] : result.raw_to_norm[r + 1];
    }
    result.text = std::move(out);
    return result;
}

std::size_t EvidenceMask::popcount() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Raster::Raster(int h, int w, std::uint8_t fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

std::vector<LineRecord> layout_lines(std::string_view text, const RenderConfig& config) {
    config.validate();
    const auto cells = static_cast<std::size_t>(config.cells_per_line());
    if (cells == 0) {
        throw ConfigError("render config: zero usable cells per line");
    }
    const int per_page = config.lines_per_page();
    if (per_page == 0) {
        throw ConfigError("render config: zero usable lines per page");
    }
    if (std::all_of(text.begin(), text.end(), [](char c) { return c == ' ' || c == '\n'; })) {
        throw InputError("layout: text is empty after whitespace normalization");
    }

    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t para_start = 0;
    while (para_start <= text.size()) {
        std::size_t para_end = text.find('\n', para_start);
        if (para_end == std::string_view::npos) para_end = text.size();

        if (para_start == para_end) {
            ranges.emplace_back(para_start, para_start);
        } else {
            std::size_t line_start = para_start;
            std::size_t col = 0;
            std::size_t i = para_start;
            while (i < para_end) {
                if (text[i] == ' ') {
                    if (col < cells) {
                        ++col;
                    } else {
                        // Full line: the space is consumed by the wrap.
                        ranges.emplace_back(line_start, i);
                        line_start = i + 1;
                        col = 0;
                    }
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < para_end && text[j] != ' ') ++j;
                std::size_t len = j - i;
                if (col + len <= cells) {
                    col += len;
                    i = j;
                    continue;
                }
                if (col > 0) {
                    ranges.emplace_back(line_start, i);
                    line_start = i;
                    col = 0;
                }
                while (len > cells) {
                    ranges.emplace_back(i, i + cells);
                    i += cells;
                    len -= cells;
                    line_start = i;
                }
                col = len;
                i = j;
            }
            ranges.emplace_back(line_start, para_end);
        }
        para_start = para_end + 1;
    }

    std::vector<LineRecord> lines;
    lines.reserve(ranges.size());
    for (std::size_t k = 0; k < ranges.size(); ++k) {
        const int page = static_cast<int>(k / static_cast<std::size_t>(per_page));
        const int row = static_cast<int>(k % static_cast<std::size_t>(per_page));
        LineRecord rec;
        rec.line_index = k;
        rec.char_start = ranges[k].first;
        rec.char_end = ranges[k].second;
        rec.y_top = page * config.page_height_px + config.margin_y + row * config.line_height_px;
        rec.y_bottom = rec.y_top + config.line_height_px;
        rec.x_left = config.margin_x;
        lines.push_back(rec);
    }
    return lines;
}

DocumentLayout layout(std::string_view raw, const RenderConfig& config) {
    DocumentLayout doc;
    doc.text = normalize_whitespace(raw).text;
    doc.lines = layout_lines(doc.text, config);
    doc.config = config;

    const int per_page = config.lines_per_page();
    const int n = static_cast<int>(doc.lines.size());
    doc.page_count = (n + per_page - 1) / per_page;
    const int rows_last = n - (doc.page_count - 1) * per_page;
    doc.height = (doc.page_count - 1) * config.page_height_px + 2 * config.margin_y + rows_last * config.line_height_px;
    doc.width = config.page_width_px;
    return doc;
}

void draw_glyph(Raster& image, int x0, int y0, unsigned char ch, const RenderConfig& config) {
    if (ch == ' ') return;
    const auto& glyph = detail::glyph_for(ch);
    const int cw = config.char_width_px;
    const int lh = config.line_height_px;
    const int gw = std::max(1, cw - 1);
    const int gh = std::max(1, lh - 3);
    const int pad_top = lh >= 4 ? 1 : 0;
    for (int gy = 0; gy < gh; ++gy) {
        const int row = gy * 7 / gh;
        const int y = y0 + pad_top + gy;
        if (y < 0 || y >= image.height) continue;
        for (int gx = 0; gx < gw; ++gx) {
            const int col = gx * 5 / gw;
            if ((glyph[static_cast<std::size_t>(col)] >> row) & 1U) {
                const int x = x0 + gx;
                if (x >= 0 && x < image.width) image.at(y, x) = config.ink_value;
            }
        }
    }
}

RenderedDocument render(std::string_view raw, const RenderConfig& config) {
    RenderedDocument doc;
    doc.layout = layout(raw, config);
    doc.image = Raster(doc.layout.height, doc.layout.width, config.background_value);
    for (const auto& line : doc.layout.lines) {
        for (std::size_t c = line.char_start; c < line.char_end; ++c) {
            const int x = line.x_left + static_cast<int>(c - line.char_start) * config.char_width_px;
            draw_glyph(doc.image, x, line.y_top, static_cast<unsigned char>(doc.layout.text[c]), config);
        }
    }
    return doc;
}

std::vector<EvidenceBox> evidence_boxes(std::span<const LineRecord> lines, std::span<const EvidenceSpan> spans,
                                        std::size_t text_length, const RenderConfig& config) {
    std::vector<EvidenceBox> boxes;
    for (const auto& span : spans) {
        if (span.char_start > span.char_end || span.char_end > text_length) {
            throw RangeError("evidence span [" + std::to_string(span.char_start) + ", " +
                             std::to_string(span.char_end) + ") outside text of length " +
                             std::to_string(text_length));
        }
        for (const auto& line : lines) {
            const std::size_t lo = std::max(span.char_start, line.char_start);
            const std::size_t hi = std::min(span.char_end, line.char_end);
            if (lo >= hi) continue;
            EvidenceBox box;
            box.x_min = line.x_left + static_cast<int>(lo - line.char_start) * config.char_width_px;
            box.x_max = line.x_left + static_cast<int>(hi - line.char_start) * config.char_width_px;
            box.y_min = line.y_top;
            box.y_max = line.y_bottom;
            boxes.push_back(box);
        }
    }
    return boxes;
}

std::vector<EvidenceBox> evidence_boxes(const DocumentLayout& doc, std::span<const EvidenceSpan> spans) {
    return evidence_boxes(doc.lines, spans, doc.text.size(), doc.config);
}

EvidenceMask evidence_mask(std::span<const EvidenceBox> boxes, int height, int width) {
    if (height < 0 || width < 0) {
        throw RangeError("evidence mask: negative dimensions");
    }
    EvidenceMask m(height, width);
    for (const auto& b : boxes) {
        if (b.x_min < 0 || b.y_min < 0 || b.x_max > width || b.y_max > height || b.x_min >= b.x_max ||
            b.y_min >= b.y_max) {
            throw RangeError("evidence box (" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " +
                             std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + ") outside " +
                             std::to_string(height) + "x" + std::to_string(width) + " image");
        }
        for (int y = b.y_min; y < b.y_max; ++y) {
            auto row = m.mask.begin() + static_cast<std::ptrdiff_t>(y) * width;
            std::fill(row + b.x_min, row + b.x_max, std::uint8_t{1});
        }
    }
    return m;
}

Raster highlight_evidence(const Raster& image, std::span<const EvidenceBox> boxes, std::uint8_t shade) {
    Raster out = image;
    for (const auto& b : boxes) {
        for (int y = std::max(0, b.y_min); y < std::min(out.height, b.y_max); ++y) {
            for (int x = std::max(0, b.x_min); x < std::min(out.width, b.x_max); ++x) {
                out.at(y, x) = static_cast<std::uint8_t>(std::min<int>(out.at(y, x), shade));
            }
        }
    }
    return out;
}

std::string encode_pgm(const Raster& image) {
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    return out;
}

Raster decode_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (bytes[pos] == ' ' || bytes[pos] == '\n' || bytes[pos] == '\r' || bytes[pos] == '\t') {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) {
        skip_space();
        int value = 0;
        auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
        if (ec != std::errc{} || value < 0) {
            throw FormatError(std::string("pgm: bad ") + what);
        }
        pos = static_cast<std::size_t>(ptr - bytes.data());
        return value;
    };
    if (bytes.substr(0, 2) != "P5") {
        throw FormatError("pgm: missing P5 magic");
    }
    pos = 2;
    const int w = read_int("width");
    const int h = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval != 255) {
        throw FormatError("pgm: only 8-bit maxval 255 is supported");
    }
    ++pos;  // single whitespace byte before the payload
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (pos > bytes.size() || bytes.size() - pos != need) {
        throw TruncationError("pgm: payload size does not match " + std::to_string(w) + "x" + std::to_string(h));
    }
    Raster r;
    r.height = h;
    r.width = w;
    r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return r;
}

namespace {

void put_u32_be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

void put_chunk(std::string& out, const char* type, std::string_view data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body.append(data);
    out.append(body);
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode_png(const Raster& image) {
    std::string out("\x89PNG\r\n\x1a\n", 8);

    std::string ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(image.width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(image.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);

    std::string raw;
    raw.reserve(static_cast<std::size_t>(image.height) * (static_cast<std::size_t>(image.width) + 1));
    for (int y = 0; y < image.height; ++y) {
        raw.push_back(0);  // filter: none
        raw.append(reinterpret_cast<const char*>(image.pixels.data()) + static_cast<std::size_t>(y) * image.width,
                   static_cast<std::size_t>(image.width));
    }
    uLongf len = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(len, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw IoError("png: deflate failed");
    }
    packed.resize(len);
    put_chunk(out, "IDAT", packed);
    put_chunk(out, "IEND", {});
    return out;
}

Raster mask_to_raster(const EvidenceMask& mask) {
    Raster r;
    r.height = mask.height;
    r.width = mask.width;
    r.pixels.resize(mask.mask.size());
    std::transform(mask.mask.begin(), mask.mask.end(), r.pixels.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
    return r;
}

EvidenceMask raster_to_mask(const Raster& raster) {
    EvidenceMask m(raster.height, raster.width);
    for (std::size_t i = 0; i < raster.pixels.size(); ++i) {
        const auto v = raster.pixels[i];
        if (v != 0 && v != 255) {
            throw FormatError("mask raster: pixel values must be 0 or 255");
        }
        m.mask[i] = v ? 1 : 0;
    }
    return m;
}

std::string layout_to_json(const DocumentLayout& doc) {
    using detail::json;
    const auto& c = doc.config;
    json j;
    j["format"] = "verlab-layout";
    j["version"] = 1;
    j["config"] = {{"page_width_px", c.page_width_px},   {"page_height_px", c.page_height_px},
                   {"margin_x", c.margin_x},             {"margin_y", c.margin_y},
                   {"char_width_px", c.char_width_px},   {"line_height_px", c.line_height_px},
                   {"ink_value", c.ink_value},           {"background_value", c.background_value}};
    j["page_count"] = doc.page_count;
    j["height"] = doc.height;
    j["width"] = doc.width;
    j["text_length"] = doc.text.size();
    json lines = json::array();
    for (const auto& l : doc.lines) {
        lines.push_back({{"line_index", l.line_index},
                         {"char_start", l.char_start},
                         {"char_end", l.char_end},
                         {"y_top", l.y_top},
                         {"y_bottom", l.y_bottom},
                         {"x_left", l.x_left}});
    }
    j["lines"] = std::move(lines);
    return detail::canonical_dump(j);
}

DocumentLayout layout_from_json(std::string_view text_json, std::string text) {
    using namespace detail;
    const json j = parse_json(text_json, "layout");
    DocumentLayout doc;
    const json& c = require(j, "layout", "config");
    doc.config.page_width_px = static_cast<int>(require_int(c, "layout.config", "page_width_px"));
    doc.config.page_height_px = static_cast<int>(require_int(c, "layout.config", "page_height_px"));
    doc.config.margin_x = static_cast<int>(require_int(c, "layout.config", "margin_x"));
    doc.config.margin_y = static_cast<int>(require_int(c, "layout.config", "margin_y"));
    doc.config.char_width_px = static_cast<int>(require_int(c, "layout.config", "char_width_px"));
    doc.config.line_height_px = static_cast<int>(require_int(c, "layout.config", "line_height_px"));
    doc.config.ink_value = static_cast<std::uint8_t>(require_int(c, "layout.config", "ink_value"));
    doc.config.background_value = static_cast<std::uint8_t>(require_int(c, "layout.config", "background_value"));
    doc.page_count = static_cast<int>(require_int(j, "layout", "page_count"));
    doc.height = static_cast<int>(require_int(j, "layout", "height"));
    doc.width = static_cast<int>(require_int(j, "layout", "width"));
    const auto text_length = static_cast<std::size_t>(require_int(j, "layout", "text_length"));
    if (text_length != text.size()) {
        throw FormatError("layout.text_length: does not match supplied text");
    }
    const json& lines = require(j, "layout", "lines");
    if (!lines.is_array()) throw FormatError("layout.lines: expected array");
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const std::string p = "layout.lines[" + std::to_string(k) + "]";
        LineRecord l;
        l.line_index = static_cast<std::size_t>(require_int_at_least(lines[k], p, "line_index", 0));
        l.char_start = static_cast<std::size_t>(require_int_at_least(lines[k], p, "char_start", 0));
        l.char_end = static_cast<std::size_t>(require_int_at_least(lines[k], p, "char_end", 0));
        l.y_top = static_cast<int>(require_int(lines[k], p, "y_top"));
        l.y_bottom = static_cast<int>(require_int(lines[k], p, "y_bottom"));
        l.x_left = static_cast<int>(require_int(lines[k], p, "x_left"));
        if (l.char_start > l.char_end || l.char_end > text.size()) {
            throw FormatError(p + ": char range outside text");
        }
        doc.lines.push_back(l);
    }
    doc.text = std::move(text);
    return doc;
}

}  // namespace verlab
