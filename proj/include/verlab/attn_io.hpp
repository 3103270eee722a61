#pragma once

// Interchange format between model adapters and the analysis core.
//
// Run directory layout:
//   manifest.json          canonical JSON (sorted keys, LF, 2-space indent)
//   steps/step_<t>.attn    "VATN" u32 version u32 L u32 H u32 P, then L*H*P float32 LE
//   entropy.trace          "VENT" u32 version u64 count, then count float32 LE
//   headmask.json          optional {"mask": [{"head": h, "layer": l}, ...]}
//
// Step payloads are stored in visual-token order. When the manifest carries a
// token_to_patch permutation, readers reorder into patch row-major order.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "verlab/analysis.hpp"

namespace verlab::io {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kEntropyFile = "entropy.trace";
inline constexpr std::string_view kHeadMaskFile = "headmask.json";

struct DumpManifest {
    int format_version = kFormatVersion;
    std::string model_id;
    int num_layers = 0;
    int num_heads = 0;
    std::size_t visual_token_count = 0;
    int patch_size_px = 28;
    int grid_h = 0;
    int grid_w = 0;
    std::optional<std::vector<std::size_t>> token_to_patch;
    std::vector<std::size_t> recorded_steps;
    std::size_t vocab_size = 0;
    std::map<std::size_t, std::string> files;  // step -> path relative to the run dir

    /// Throws FormatError (or UnsupportedVersionError) with a field path.
    void validate() const;
    [[nodiscard]] ModelTopology topology() const;
    [[nodiscard]] bool has_step(std::size_t step) const;

    bool operator==(const DumpManifest&) const = default;
};

/// Default relative path of a step file.
std::string step_file_name(std::size_t step);

std::string write_manifest(const DumpManifest& manifest);
DumpManifest read_manifest(std::string_view bytes);

/// Encodes a record whose tokens are in visual-token (model) order.
std::string encode_step_attention(const AttentionRecord& record);
/// Decodes a step file against its manifest, applying the token permutation.
AttentionRecord decode_step_attention(std::string_view bytes, const DumpManifest& manifest, std::size_t step);

std::string encode_entropy_trace(const EntropyTrace& trace);
EntropyTrace decode_entropy_trace(std::string_view bytes);

std::string encode_head_mask(const HeadMaskSpec& spec);
/// Parses and canonicalizes; rejects unsorted or duplicated input only when `strict`.
HeadMaskSpec decode_head_mask(std::string_view bytes, bool strict = true);
/// Range check against a manifest's topology.
void validate_head_mask(const HeadMaskSpec& spec, const DumpManifest& manifest);

// Filesystem helpers over a run directory.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

DumpManifest load_manifest(const std::filesystem::path& run_dir);
void save_manifest(const std::filesystem::path& run_dir, const DumpManifest& manifest);
AttentionRecord read_step_attention(const std::filesystem::path& run_dir, const DumpManifest& manifest,
                                    std::size_t step);
/// Writes steps/step_<t>.attn; the manifest is not touched.
void write_step_attention(const std::filesystem::path& run_dir, const AttentionRecord& record);
EntropyTrace read_entropy_trace(const std::filesystem::path& run_dir);
void write_entropy_trace(const std::filesystem::path& run_dir, const EntropyTrace& trace);

}  // namespace verlab::io
