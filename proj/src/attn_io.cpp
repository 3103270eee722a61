#include "verlab/attn_io.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_util.hpp"
#include "json_util.hpp"
#include "verlab/error.hpp"

namespace verlab::io {

namespace {

using detail::json;

constexpr std::string_view kStepMagic = "VATN";
constexpr std::string_view kTraceMagic = "VENT";
constexpr std::size_t kStepHeaderSize = 4 + 4 * 4;
constexpr std::size_t kTraceHeaderSize = 4 + 4 + 8;

std::size_t checked_mul(std::size_t a, std::size_t b, std::string_view what) {
    if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
        throw FormatError(std::string(what) + ": dimension overflow");
    }
    return a * b;
}

}  // namespace

std::string step_file_name(std::size_t step) { return "steps/step_" + std::to_string(step) + ".attn"; }

void DumpManifest::validate() const {
    if (format_version != kFormatVersion) {
        throw UnsupportedVersionError("manifest.format_version: unsupported version " +
                                      std::to_string(format_version));
    }
    if (num_layers < 1) throw FormatError("manifest.num_layers: must be >= 1");
    if (num_heads < 1) throw FormatError("manifest.num_heads: must be >= 1");
    if (patch_size_px < 1) throw FormatError("manifest.patch_size_px: must be >= 1");
    if (grid_h < 1 || grid_w < 1) throw FormatError("manifest.grid: dims must be >= 1");
    if (vocab_size < 1) throw FormatError("manifest.vocab_size: must be >= 1");
    const auto cells = static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w);
    if (cells != visual_token_count) {
        throw FormatError("manifest.visual_token_count: " + std::to_string(visual_token_count) +
                          " does not equal grid_h*grid_w = " + std::to_string(cells));
    }
    if (token_to_patch) {
        topology().validate();
    }
    for (std::size_t i = 1; i < recorded_steps.size(); ++i) {
        if (recorded_steps[i] <= recorded_steps[i - 1]) {
            throw FormatError("manifest.recorded_steps[" + std::to_string(i) + "]: steps must be sorted and unique");
        }
    }
    for (auto step : recorded_steps) {
        if (!files.contains(step)) {
            throw FormatError("manifest.files." + std::to_string(step) + ": missing file for recorded step");
        }
    }
    for (const auto& [step, path] : files) {
        if (!has_step(step)) {
            throw FormatError("manifest.files." + std::to_string(step) + ": step not listed in recorded_steps");
        }
        if (path.empty() || path.front() == '/' || path.find("..") != std::string::npos) {
            throw FormatError("manifest.files." + std::to_string(step) + ": path must be relative to the run dir");
        }
    }
}

ModelTopology DumpManifest::topology() const {
    ModelTopology t;
    t.num_layers = num_layers;
    t.num_heads = num_heads;
    t.grid.patch_size_px = patch_size_px;
    t.grid.grid_h = grid_h;
    t.grid.grid_w = grid_w;
    t.grid.image_h = grid_h * patch_size_px;
    t.grid.image_w = grid_w * patch_size_px;
    if (token_to_patch) t.token_to_patch = *token_to_patch;
    return t;
}

bool DumpManifest::has_step(std::size_t step) const {
    return std::binary_search(recorded_steps.begin(), recorded_steps.end(), step);
}

std::string write_manifest(const DumpManifest& m) {
    m.validate();
    json j;
    j["format_version"] = m.format_version;
    j["model_id"] = m.model_id;
    j["num_layers"] = m.num_layers;
    j["num_heads"] = m.num_heads;
    j["visual_token_count"] = m.visual_token_count;
    j["patch_size_px"] = m.patch_size_px;
    j["grid_h"] = m.grid_h;
    j["grid_w"] = m.grid_w;
    if (m.token_to_patch) j["token_to_patch"] = *m.token_to_patch;
    j["recorded_steps"] = m.recorded_steps;
    j["vocab_size"] = m.vocab_size;
    json files = json::object();
    for (const auto& [step, path] : m.files) files[std::to_string(step)] = path;
    j["files"] = std::move(files);
    return detail::canonical_dump(j);
}

DumpManifest read_manifest(std::string_view bytes) {
    using namespace detail;
    const json j = parse_json(bytes, "manifest");
    if (!j.is_object()) throw FormatError("manifest: expected object");
    DumpManifest m;
    m.format_version = static_cast<int>(require_int(j, "manifest", "format_version"));
    if (m.format_version != kFormatVersion) {
        throw UnsupportedVersionError("manifest.format_version: unsupported version " +
                                      std::to_string(m.format_version));
    }
    m.model_id = require_string(j, "manifest", "model_id");
    m.num_layers = static_cast<int>(require_int_at_least(j, "manifest", "num_layers", 1));
    m.num_heads = static_cast<int>(require_int_at_least(j, "manifest", "num_heads", 1));
    m.visual_token_count = static_cast<std::size_t>(require_int_at_least(j, "manifest", "visual_token_count", 1));
    m.patch_size_px = static_cast<int>(require_int_at_least(j, "manifest", "patch_size_px", 1));
    m.grid_h = static_cast<int>(require_int_at_least(j, "manifest", "grid_h", 1));
    m.grid_w = static_cast<int>(require_int_at_least(j, "manifest", "grid_w", 1));
    m.vocab_size = static_cast<std::size_t>(require_int_at_least(j, "manifest", "vocab_size", 1));

    if (auto it = j.find("token_to_patch"); it != j.end()) {
        if (!it->is_array()) throw FormatError("manifest.token_to_patch: expected array");
        std::vector<std::size_t> perm;
        perm.reserve(it->size());
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& v = (*it)[i];
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
                throw FormatError("manifest.token_to_patch[" + std::to_string(i) + "]: expected non-negative integer");
            }
            perm.push_back(v.get<std::size_t>());
        }
        m.token_to_patch = std::move(perm);
    }

    const json& steps = require(j, "manifest", "recorded_steps");
    if (!steps.is_array()) throw FormatError("manifest.recorded_steps: expected array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (!steps[i].is_number_integer() || steps[i].get<std::int64_t>() < 0) {
            throw FormatError("manifest.recorded_steps[" + std::to_string(i) + "]: expected non-negative integer");
        }
        m.recorded_steps.push_back(steps[i].get<std::size_t>());
    }

    const json& files = require(j, "manifest", "files");
    if (!files.is_object()) throw FormatError("manifest.files: expected object");
    for (const auto& [key, value] : files.items()) {
        std::size_t step = 0;
        try {
            std::size_t used = 0;
            step = std::stoull(key, &used);
            if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw FormatError("manifest.files." + key + ": key must be a decimal step ordinal");
        }
        if (!value.is_string()) throw FormatError("manifest.files." + key + ": expected string");
        m.files[step] = value.get<std::string>();
    }
    m.validate();
    return m;
}

std::string encode_step_attention(const AttentionRecord& record) {
    if (record.attn.size() != static_cast<std::size_t>(record.num_layers) * record.num_heads * record.tokens) {
        throw ShapeError("encode_step_attention: payload does not match dims");
    }
    for (double v : record.attn) {
        if (!std::isfinite(v)) throw NonFiniteError("encode_step_attention: non-finite weight");
    }
    std::string out(kStepMagic);
    detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(kFormatVersion));
    detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(record.num_layers));
    detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(record.num_heads));
    detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(record.tokens));
    detail::append_f32_le(out, record.attn);
    return out;
}

AttentionRecord decode_step_attention(std::string_view bytes, const DumpManifest& manifest, std::size_t step) {
    const std::string what = "step " + std::to_string(step);
    if (bytes.size() < kStepHeaderSize) {
        throw TruncationError(what + ": header truncated");
    }
    if (bytes.substr(0, 4) != kStepMagic) {
        throw FormatError(what + ": bad magic");
    }
    const auto version = detail::read_le<std::uint32_t>(bytes, 4);
    if (version != static_cast<std::uint32_t>(kFormatVersion)) {
        throw UnsupportedVersionError(what + ": unsupported version " + std::to_string(version));
    }
    const auto layers = detail::read_le<std::uint32_t>(bytes, 8);
    const auto heads = detail::read_le<std::uint32_t>(bytes, 12);
    const auto tokens = detail::read_le<std::uint32_t>(bytes, 16);
    if (layers != static_cast<std::uint32_t>(manifest.num_layers) ||
        heads != static_cast<std::uint32_t>(manifest.num_heads) || tokens != manifest.visual_token_count) {
        throw ShapeError(what + ": dims [" + std::to_string(layers) + ", " + std::to_string(heads) + ", " +
                         std::to_string(tokens) + "] do not match manifest");
    }
    const std::size_t count =
        checked_mul(checked_mul(layers, heads, what), tokens, what);
    // Size check happens inside read_f32_le before the output is allocated.
    auto values = detail::read_f32_le(bytes.substr(kStepHeaderSize), count, what);

    AttentionRecord rec;
    rec.step = step;
    rec.num_layers = static_cast<int>(layers);
    rec.num_heads = static_cast<int>(heads);
    rec.tokens = tokens;
    if (!manifest.token_to_patch) {
        rec.attn = std::move(values);
        return rec;
    }
    const auto& perm = *manifest.token_to_patch;
    rec.attn.assign(count, 0.0);
    for (std::size_t base = 0; base < count; base += tokens) {
        for (std::size_t t = 0; t < tokens; ++t) rec.attn[base + perm[t]] = values[base + t];
    }
    return rec;
}

std::string encode_entropy_trace(const EntropyTrace& trace) {
    std::string out(kTraceMagic);
    detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(kFormatVersion));
    detail::append_le<std::uint64_t>(out, static_cast<std::uint64_t>(trace.entropies.size()));
    for (double v : trace.entropies) {
        if (!std::isfinite(v)) throw NonFiniteError("encode_entropy_trace: non-finite entropy");
    }
    detail::append_f32_le(out, trace.entropies);
    return out;
}

EntropyTrace decode_entropy_trace(std::string_view bytes) {
    if (bytes.size() < kTraceHeaderSize) {
        throw TruncationError("entropy trace: header truncated");
    }
    if (bytes.substr(0, 4) != kTraceMagic) {
        throw FormatError("entropy trace: bad magic");
    }
    const auto version = detail::read_le<std::uint32_t>(bytes, 4);
    if (version != static_cast<std::uint32_t>(kFormatVersion)) {
        throw UnsupportedVersionError("entropy trace: unsupported version " + std::to_string(version));
    }
    const auto count = detail::read_le<std::uint64_t>(bytes, 8);
    EntropyTrace trace;
    trace.entropies =
        detail::read_f32_le(bytes.substr(kTraceHeaderSize), static_cast<std::size_t>(count), "entropy trace");
    for (std::size_t i = 0; i < trace.entropies.size(); ++i) {
        if (trace.entropies[i] < 0.0) {
            throw FormatError("entropy trace: negative entropy at step " + std::to_string(i));
        }
    }
    return trace;
}

std::string encode_head_mask(const HeadMaskSpec& spec) {
    json mask = json::array();
    for (const auto& h : spec.mask) mask.push_back({{"layer", h.layer}, {"head", h.head}});
    return detail::canonical_dump(json{{"mask", std::move(mask)}});
}

HeadMaskSpec decode_head_mask(std::string_view bytes, bool strict) {
    using namespace detail;
    const json j = parse_json(bytes, "headmask");
    const json& mask = require(j, "headmask", "mask");
    if (!mask.is_array()) throw FormatError("headmask.mask: expected array");
    HeadMaskSpec spec;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const std::string p = "headmask.mask[" + std::to_string(i) + "]";
        HeadId h{static_cast<int>(require_int_at_least(mask[i], p, "layer", 0)),
                 static_cast<int>(require_int_at_least(mask[i], p, "head", 0))};
        if (strict && !spec.mask.empty() && !(spec.mask.back() < h)) {
            throw FormatError(p + ": entries must be sorted by (layer, head) and unique");
        }
        spec.mask.push_back(h);
    }
    std::sort(spec.mask.begin(), spec.mask.end());
    spec.mask.erase(std::unique(spec.mask.begin(), spec.mask.end()), spec.mask.end());
    return spec;
}

void validate_head_mask(const HeadMaskSpec& spec, const DumpManifest& manifest) {
    for (std::size_t i = 0; i < spec.mask.size(); ++i) {
        const auto& h = spec.mask[i];
        if (h.layer >= manifest.num_layers || h.head >= manifest.num_heads) {
            throw RangeError("headmask.mask[" + std::to_string(i) + "]: head (" + std::to_string(h.layer) + ", " +
                             std::to_string(h.head) + ") outside topology");
        }
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

DumpManifest load_manifest(const std::filesystem::path& run_dir) {
    return read_manifest(read_file(run_dir / kManifestFile));
}

void save_manifest(const std::filesystem::path& run_dir, const DumpManifest& manifest) {
    write_file(run_dir / kManifestFile, write_manifest(manifest));
}

AttentionRecord read_step_attention(const std::filesystem::path& run_dir, const DumpManifest& manifest,
                                    std::size_t step) {
    auto it = manifest.files.find(step);
    if (!manifest.has_step(step) || it == manifest.files.end()) {
        throw MissingStepError("step " + std::to_string(step) + " is not recorded in the manifest");
    }
    const auto path = run_dir / it->second;
    if (!std::filesystem::exists(path)) {
        throw MissingStepError("step " + std::to_string(step) + ": file " + path.string() + " is missing");
    }
    return decode_step_attention(read_file(path), manifest, step);
}

void write_step_attention(const std::filesystem::path& run_dir, const AttentionRecord& record) {
    write_file(run_dir / step_file_name(record.step), encode_step_attention(record));
}

EntropyTrace read_entropy_trace(const std::filesystem::path& run_dir) {
    return decode_entropy_trace(read_file(run_dir / kEntropyFile));
}

void write_entropy_trace(const std::filesystem::path& run_dir, const EntropyTrace& trace) {
    write_file(run_dir / kEntropyFile, encode_entropy_trace(trace));
}

}  // namespace verlab::io
