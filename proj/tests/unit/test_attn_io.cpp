#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"

using namespace verlab;
using namespace verlab::io;

namespace {

DumpManifest small_manifest(int L, int H, int gh, int gw) {
    DumpManifest m;
    m.model_id = "toy";
    m.num_layers = L;
    m.num_heads = H;
    m.grid_h = gh;
    m.grid_w = gw;
    m.visual_token_count = static_cast<std::size_t>(gh) * gw;
    m.vocab_size = 10;
    m.recorded_steps = {0};
    m.files[0] = step_file_name(0);
    return m;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("verlab-unit-" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("manifest round trip is canonical") {
    auto m = small_manifest(2, 3, 2, 2);
    m.recorded_steps = {0, 4};
    m.files[4] = step_file_name(4);
    m.token_to_patch = std::vector<std::size_t>{1, 0, 3, 2};
    const auto bytes = write_manifest(m);
    CHECK(bytes.back() == '\n');
    CHECK(bytes.find('\r') == std::string::npos);
    const auto back = read_manifest(bytes);
    CHECK(back == m);
    CHECK(write_manifest(back) == bytes);
    CHECK(back.topology().token_to_patch == std::vector<std::size_t>{1, 0, 3, 2});
}

TEST_CASE("manifest invariants") {
    auto m = small_manifest(1, 1, 3, 4);
    m.visual_token_count = 11;
    CHECK_THROWS_AS(m.validate(), FormatError);

    auto v = small_manifest(1, 1, 2, 2);
    v.format_version = 99;
    CHECK_THROWS_AS(read_manifest(write_manifest(small_manifest(1, 1, 2, 2)).replace(
                        write_manifest(small_manifest(1, 1, 2, 2)).find("\"format_version\": 1"), 19,
                        "\"format_version\": 99")),
                    UnsupportedVersionError);

    auto unsorted = small_manifest(1, 1, 2, 2);
    unsorted.recorded_steps = {3, 1};
    unsorted.files = {{1, step_file_name(1)}, {3, step_file_name(3)}};
    CHECK_THROWS_AS(unsorted.validate(), FormatError);

    auto escape = small_manifest(1, 1, 2, 2);
    escape.files[0] = "../outside.attn";
    CHECK_THROWS_AS(escape.validate(), FormatError);

    try {
        read_manifest("{\"format_version\": 1}");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("manifest.") != std::string::npos);
    }
}

TEST_CASE("step tensor exact float round trip") {
    const auto m = small_manifest(1, 1, 2, 2);
    AttentionRecord rec(0, 1, 1, 4);
    rec.attn = {0.1, 0.2, 0.3, 0.4};
    const auto bytes = encode_step_attention(rec);
    CHECK(bytes.substr(0, 4) == "VATN");
    const auto back = decode_step_attention(bytes, m, 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(back.attn[i] == static_cast<double>(static_cast<float>(rec.attn[i])));
    CHECK(encode_step_attention(back) == bytes);
}

TEST_CASE("step tensor corruption") {
    const auto m = small_manifest(1, 1, 2, 2);
    AttentionRecord rec(0, 1, 1, 4);
    rec.attn = {0.1, 0.2, 0.3, 0.4};
    const auto bytes = encode_step_attention(rec);
    CHECK_THROWS_AS(decode_step_attention(bytes.substr(0, bytes.size() - 4), m, 0), TruncationError);
    CHECK_THROWS_AS(decode_step_attention(bytes.substr(0, 6), m, 0), TruncationError);
    CHECK_THROWS_AS(decode_step_attention(bytes + "xxxx", m, 0), TruncationError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_step_attention(magic, m, 0), FormatError);
    auto nan = bytes;
    const float q = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + nan.size() - 4, &q, 4);
    CHECK_THROWS_AS(decode_step_attention(nan, m, 0), NonFiniteError);
    CHECK_THROWS_AS(decode_step_attention(bytes, small_manifest(2, 1, 2, 2), 0), ShapeError);
}

TEST_CASE("permuted token order lands on the right patches") {
    auto m = small_manifest(1, 2, 2, 3);
    const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
    m.token_to_patch = perm;
    AttentionRecord tokens(0, 1, 2, 6);
    for (std::size_t i = 0; i < tokens.attn.size(); ++i) tokens.attn[i] = static_cast<double>(i) / 16.0;
    const auto rec = decode_step_attention(encode_step_attention(tokens), m, 0);
    for (int h = 0; h < 2; ++h) {
        for (std::size_t t = 0; t < 6; ++t) {
            CHECK(rec.head({0, h})[perm[t]] == tokens.head({0, h})[t]);
        }
    }
}

TEST_CASE("entropy trace round trips") {
    const auto empty = encode_entropy_trace({});
    CHECK(empty.size() == 16);
    CHECK(decode_entropy_trace(empty).entropies.empty());

    const EntropyTrace two{{0.1, 2.5}};
    const auto bytes = encode_entropy_trace(two);
    const auto back = decode_entropy_trace(bytes);
    CHECK(back.entropies[0] == static_cast<double>(0.1f));
    CHECK(back.entropies[1] == 2.5);
    CHECK(encode_entropy_trace(back) == bytes);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(0.0f, 9.0f);
    EntropyTrace big;
    for (int i = 0; i < 10000; ++i) big.entropies.push_back(u(rng));
    const auto big_bytes = encode_entropy_trace(big);
    CHECK(encode_entropy_trace(decode_entropy_trace(big_bytes)) == big_bytes);
    CHECK_THROWS_AS(decode_entropy_trace(big_bytes.substr(0, big_bytes.size() - 1)), TruncationError);
    CHECK_THROWS_AS(decode_entropy_trace(encode_entropy_trace({{-1.0}})), FormatError);
}

TEST_CASE("head mask json") {
    const HeadMaskSpec spec{{{0, 3}, {2, 1}}};
    const auto bytes = encode_head_mask(spec);
    CHECK(bytes == "{\n  \"mask\": [\n    {\n      \"head\": 3,\n      \"layer\": 0\n    },\n    {\n      \"head\": 1,\n"
                   "      \"layer\": 2\n    }\n  ]\n}\n");
    CHECK(decode_head_mask(bytes) == spec);
    const std::string unsorted = R"({"mask": [{"layer": 2, "head": 1}, {"layer": 0, "head": 3}, {"layer": 0, "head": 3}]})";
    CHECK_THROWS_AS(decode_head_mask(unsorted), FormatError);
    CHECK(decode_head_mask(unsorted, false) == spec);
    auto m = small_manifest(2, 2, 1, 1);
    CHECK_THROWS_AS(validate_head_mask(spec, m), RangeError);
    m.num_layers = 3;
    m.num_heads = 4;
    CHECK_NOTHROW(validate_head_mask(spec, m));
}

TEST_CASE("run directory helpers") {
    const auto dir = temp_dir("rundir");
    const auto m = small_manifest(1, 1, 1, 2);
    AttentionRecord rec(0, 1, 1, 2);
    rec.attn = {0.25, 0.75};
    write_step_attention(dir, rec);
    save_manifest(dir, m);
    write_entropy_trace(dir, {{0.5}});
    const auto loaded = load_manifest(dir);
    CHECK(loaded == m);
    CHECK(read_step_attention(dir, loaded, 0).attn == rec.attn);
    CHECK_THROWS_AS(read_step_attention(dir, loaded, 5), MissingStepError);
    CHECK(read_entropy_trace(dir).entropies == std::vector<double>{0.5});
    std::filesystem::remove(dir / step_file_name(0));
    CHECK_THROWS_AS(read_step_attention(dir, loaded, 0), MissingStepError);
    std::filesystem::remove_all(dir);
}
