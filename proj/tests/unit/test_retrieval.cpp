#include <doctest.h>

#include <random>

#include "verlab/error.hpp"
#include "verlab/retrieval.hpp"
#include "verlab/synth.hpp"

using namespace verlab;

namespace {

const std::string kVeraRagExpected =
    "Please answer the question based on the document images provided.\n\n"
    "What is X?\n\n"
    "Some text Information (Maybe useful, extracted from image): E. .\n\n"
    "Judge whether you need it or not first, **do not** hesitate repeatedly. The answer shouldn't include reason "
    "(if not required).\n\n"
    "Please output your answer **directly** based on the provided images and text.";

const std::string kOriginalExpected =
    "Please answer the question based on the document images provided.\n\n"
    "What is X?\n\n"
    "Please output your answer **directly** based on the provided images and text.";

VerbalizedEvidence evidence_of(std::string text) {
    VerbalizedEvidence e;
    e.text = std::move(text);
    e.lines.push_back({0, 0, e.text.size()});
    return e;
}

}  // namespace

TEST_CASE("vera-rag prompt bytes") {
    const auto p = build_prompt(evidence_of("E."), "What is X?");
    CHECK(p.template_id == "vera-rag");
    CHECK(p.text == kVeraRagExpected);
}

TEST_CASE("empty evidence falls back to the original prompt") {
    const auto p = build_prompt(VerbalizedEvidence{}, "What is X?");
    CHECK(p.template_id == "original");
    CHECK(p.text == kOriginalExpected);
    CHECK_THROWS_AS(build_prompt(VerbalizedEvidence{}, "What is X?", "nope"), ConfigError);
    CHECK_THROWS_AS(build_prompt(evidence_of("E."), ""), InputError);
}

TEST_CASE("eq6 template") {
    const auto p = build_prompt(evidence_of("ctx"), "q?", kTemplateEq6);
    CHECK(p.text == "ctx\n\nq?\n\nAnswer:");
}

TEST_CASE("substituted text is not rescanned") {
    const auto p = build_prompt(evidence_of("{question}"), "{rag_info}");
    CHECK(p.text.find("Please answer the question based on the document images provided.\n\n{rag_info}\n\n") == 0);
    CHECK(p.text.find("extracted from image): {question} .") != std::string::npos);
}

TEST_CASE("prompt json round trip and tamper check") {
    const auto p = build_prompt(evidence_of("E."), "What is X?", kTemplateVeraRag, "doc.png");
    const auto j = prompt_to_json(p);
    CHECK(prompt_from_json(j) == p);
    auto tampered = j;
    tampered.replace(tampered.find("directly"), 8, "DIRECTLY");
    CHECK_THROWS_AS(prompt_from_json(tampered), FormatError);
}

TEST_CASE("fusing heads averages in canonical order") {
    AttentionRecord rec(0, 2, 2, 3);
    rec.attn = {0.1, 0.2, 0.7, 0.3, 0.3, 0.4, 0.5, 0.5, 0.0, 1.0, 0.0, 0.0};
    const std::vector<HeadId> heads{{1, 1}, {0, 0}};
    const auto fused = fuse_heads(rec, heads);
    CHECK(fused[0] == doctest::Approx(0.55));
    CHECK(fused[1] == doctest::Approx(0.1));
    CHECK(fused[2] == doctest::Approx(0.35));
    const std::vector<HeadId> reversed{{0, 0}, {1, 1}};
    CHECK(fuse_heads(rec, reversed) == fused);
    CHECK_THROWS_AS(fuse_heads(rec, {}), InputError);
    CHECK_THROWS_AS(fuse_heads(rec, std::vector<HeadId>{{2, 0}}), RangeError);
}

TEST_CASE("patch selection orders by weight then row-major index") {
    const auto grid = make_grid(4, 6, 2);  // 2 x 3
    const std::vector<double> fused{0.1, 0.3, 0.3, 0.0, 0.3, 0.0};
    const auto set = select_top_patches(fused, grid, 3);
    REQUIRE(set.patches.size() == 3);
    CHECK(set.patches[0] == EvidencePatch{0, 1, 0.3});
    CHECK(set.patches[1] == EvidencePatch{0, 2, 0.3});
    CHECK(set.patches[2] == EvidencePatch{1, 1, 0.3});
    CHECK(select_top_patches(fused, grid, 100).patches.size() == 6);
    CHECK_THROWS_AS(select_top_patches(fused, grid, 0), ConfigError);
    CHECK_THROWS_AS(select_top_patches(std::vector<double>{1.0}, grid, 1), ShapeError);
}

TEST_CASE("one patch row expands to every line it touches") {
    const auto fx = synth::fixture_document(20, {}, RenderConfig{}, 3);
    const auto& doc = fx.doc.layout;
    const auto grid = make_grid(doc.height, doc.width, 28);
    EvidencePatchSet set;
    set.patches.push_back({1, 0, 1.0});  // rows 28..56 touch lines with y_top 20, 30, 40, 50
    const auto ev = expand_to_rows(set, grid, doc);
    REQUIRE(ev.lines.size() == 4);
    CHECK(ev.lines[0].line_index == 1);
    CHECK(ev.lines[3].line_index == 4);
    std::string expected;
    for (std::size_t k = 1; k <= 4; ++k) {
        if (k > 1) expected += '\n';
        expected += doc.text.substr(doc.lines[k].char_start, doc.lines[k].size());
    }
    CHECK(ev.text == expected);

    // Same row twice plus a neighbour: deduplicated, document order.
    set.patches = {{1, 3, 0.9}, {0, 2, 0.8}, {1, 0, 0.7}};
    const auto merged = expand_to_rows(set, grid, doc);
    CHECK(merged.lines.front().line_index == 0);
    CHECK(merged.lines.back().line_index == 4);
    CHECK(merged.lines.size() == 5);
}

TEST_CASE("row expansion rejects a grid for another image") {
    const auto fx = synth::fixture_document(5, {}, RenderConfig{}, 3);
    EvidencePatchSet set;
    CHECK_THROWS_AS(expand_to_rows(set, make_grid(100, 100, 28), fx.doc.layout), ShapeError);
    CHECK(expand_to_rows(set, make_grid(fx.doc.height(), fx.doc.width(), 28), fx.doc.layout).text.empty());
}

TEST_CASE("vera plan triggers once at the first high-entropy step") {
    const auto fx = synth::fixture_document(30, {12}, RenderConfig{}, 5);
    const auto grid = make_grid(fx.doc.height(), fx.doc.width(), 28);
    const auto cov = coverage_weights(fx.mask, grid);
    synth::PlantSpec spec{{2, 2, grid, {}}, {1, 0}, synth::evidence_patches(cov), 0.9, 1, std::nullopt};

    std::vector<std::size_t> calls;
    AttentionProvider provider = [&](std::size_t step) {
        calls.push_back(step);
        return synth::plant_attention(spec, step);
    };
    RetrievalConfig cfg;
    cfg.k = 1;
    cfg.selected_heads = {{1, 0}};

    const EntropyTrace trace{{0.1, 0.5, 2.5, 0.2, 3.0}};
    const auto plan = run_vera_plan(trace, provider, cfg, grid, fx.doc.layout, "Which line?");
    CHECK(plan.triggered);
    CHECK(plan.t_star == 2u);
    CHECK(calls == std::vector<std::size_t>{2});
    REQUIRE(plan.prompt.has_value());
    CHECK(plan.prompt->template_id == "vera-rag");
    const auto& gold = fx.source.spans.front();
    const std::string gold_line = fx.source.text.substr(gold.char_start, gold.char_end - gold.char_start);
    CHECK(plan.evidence.text.find(gold_line) != std::string::npos);

    calls.clear();
    const auto quiet = run_vera_plan({{0.1, 2.0}}, provider, cfg, grid, fx.doc.layout, "Which line?");
    CHECK_FALSE(quiet.triggered);
    CHECK_FALSE(quiet.prompt.has_value());
    CHECK(calls.empty());

    const auto instruct =
        run_vera_plan({{0.1}}, provider, cfg, grid, fx.doc.layout, "Which line?", TriggerMode::Instruct);
    CHECK(instruct.t_star == 0u);
    CHECK(calls == std::vector<std::size_t>{0});

    AttentionProvider wrong = [&](std::size_t) { return synth::plant_attention(spec, 7); };
    CHECK_THROWS_AS(run_vera_plan(trace, wrong, cfg, grid, fx.doc.layout, "q"), InputError);
}

TEST_CASE("retrieval config validation") {
    RetrievalConfig c;
    CHECK_NOTHROW(c.validate());
    c.n_patches = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.n_patches = 20;
    c.selected_heads = {{0, 0}};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
