#include <doctest.h>

#include <filesystem>

#include "support/oracles.hpp"
#include "verlab/error.hpp"
#include "verlab/synth.hpp"

using namespace verlab;
using namespace verlab::synth;

TEST_CASE("planted head distribution") {
    PlantSpec spec{{2, 3, make_grid(4, 4, 2), {}}, {1, 2}, {0, 3}, 0.9, 0, std::nullopt};
    const auto rec = plant_attention(spec);
    CHECK_NOTHROW(rec.validate());
    const auto planted = rec.head({1, 2});
    CHECK(planted[0] == doctest::Approx(0.45));
    CHECK(planted[3] == doctest::Approx(0.45));
    CHECK(planted[1] == doctest::Approx(0.05));
    for (double v : rec.head({0, 0})) CHECK(v == 0.25);

    spec.dirichlet_alpha = 1.0;
    const auto noisy = plant_attention(spec);
    CHECK_NOTHROW(noisy.validate());
    CHECK(noisy.attn == plant_attention(spec).attn);

    spec.q = 1.5;
    CHECK_THROWS_AS(plant_attention(spec), InputError);
    spec.q = 0.5;
    spec.target_patches = {9};
    CHECK_THROWS_AS(plant_attention(spec), RangeError);
}

TEST_CASE("planted trace") {
    const auto t = plant_entropy_trace(5, 2, 0.1, 3.0);
    CHECK(t.entropies == std::vector<double>{0.1, 0.1, 3.0, 0.1, 0.1});
    CHECK(oracle::first_above(t.entropies, 2.0) == 2u);
    CHECK_THROWS_AS(plant_entropy_trace(2, 5, 0.1, 3.0), InputError);
}

TEST_CASE("fixture document lines map one to one") {
    const auto fx = fixture_document(12, {3, 7}, RenderConfig{}, 4);
    CHECK(fx.doc.layout.lines.size() == 12);
    CHECK(fx.evidence_lines == std::vector<std::size_t>{3, 7});
    REQUIRE(fx.source.spans.size() == 2);
    const auto& l3 = fx.doc.layout.lines[3];
    CHECK(fx.source.spans[0] == EvidenceSpan{l3.char_start, l3.char_end});
    CHECK(fx.mask.popcount() > 0);
    CHECK(fx.source.text.rfind("line 0:", 0) == 0);
    CHECK(normalize_whitespace(fx.source.text).text == fx.source.text);
}

TEST_CASE("fixture samples are deterministic and answerable") {
    const auto a = fixture_samples(5, 10, RenderConfig{}, 42);
    const auto b = fixture_samples(5, 10, RenderConfig{}, 42);
    REQUIRE(a.size() == 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(eval::sample_to_json(a[i]) == eval::sample_to_json(b[i]));
        CHECK_NOTHROW(a[i].validate());
        const auto& s = a[i].gold_spans[0];
        CHECK(a[i].context.substr(s.char_start, s.char_end - s.char_start).find(a[i].gold_answers[0]) !=
              std::string::npos);
    }
}

TEST_CASE("synthetic run directory reads back through attn-io") {
    const auto dir = std::filesystem::temp_directory_path() / "verlab-unit-synth";
    std::filesystem::remove_all(dir);
    SynthRun run;
    run.plant = {{2, 2, make_grid(56, 84, 28), {5, 0, 1, 2, 3, 4}}, {1, 1}, {4}, 1.0, 0, std::nullopt};
    const auto m = write_synthetic_run(dir, run);
    const auto loaded = io::load_manifest(dir);
    CHECK(loaded == m);
    CHECK(loaded.recorded_steps == std::vector<std::size_t>{0, 3});
    const auto rec = io::read_step_attention(dir, loaded, 3);
    CHECK(rec.head({1, 1})[4] == 1.0);
    CHECK(rec.head({0, 0})[4] == static_cast<double>(static_cast<float>(1.0 / 6.0)));
    CHECK(io::read_entropy_trace(dir).entropies.size() == 16);
    std::filesystem::remove_all(dir);
}
