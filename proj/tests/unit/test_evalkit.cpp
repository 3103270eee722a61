#include <doctest.h>

#include <random>
#include <set>

#include "verlab/error.hpp"
#include "verlab/evalkit.hpp"

using namespace verlab;
using namespace verlab::eval;

namespace {

const std::vector<std::string> golds(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST_CASE("retrieval precision and recall") {
    const std::string ctx = "abcdefghij";
    const std::vector<EvidenceSpan> gold{{0, 4}};
    const auto exact = retrieval_prf(ctx, offsets_from_spans(gold), gold);
    CHECK(exact.precision == 1.0);
    CHECK(exact.recall == 1.0);
    CHECK(exact.f1 == 1.0);

    const std::vector<std::size_t> disjoint{6, 7};
    const auto none = retrieval_prf(ctx, disjoint, gold);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    const std::vector<std::size_t> doubled{0, 1, 2, 3, 4, 5, 6, 7};
    const auto half = retrieval_prf(ctx, doubled, gold);
    CHECK(half.precision == 0.5);
    CHECK(half.recall == 1.0);
    CHECK(half.f1 == doctest::Approx(2.0 / 3.0));

    CHECK(retrieval_prf(ctx, {}, gold).f1 == 0.0);
    CHECK_THROWS_AS(retrieval_prf(ctx, disjoint, {}), InputError);
    CHECK_THROWS_AS(retrieval_prf(ctx, std::vector<std::size_t>{10}, gold), RangeError);
}

TEST_CASE("retrieval metrics ignore whitespace") {
    const std::string ctx = "ab cd\nef";
    const std::vector<EvidenceSpan> gold{{0, 5}};
    const std::vector<std::size_t> got{0, 1, 3, 4, 5};
    const auto e = retrieval_prf(ctx, got, gold);
    CHECK(e.precision == 1.0);
    CHECK(e.recall == 1.0);
}

TEST_CASE("retrieval metrics match set arithmetic on random layouts") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 50; ++t) {
        std::uniform_int_distribution<int> len(20, 200);
        std::string ctx(len(rng), 'x');
        std::uniform_int_distribution<std::size_t> pos(0, ctx.size() - 1);
        for (int k = 0; k < 10; ++k) ctx[pos(rng)] = ' ';
        std::vector<EvidenceSpan> gold;
        for (int k = 0; k < 3; ++k) {
            std::size_t a = pos(rng), b = pos(rng);
            if (a > b) std::swap(a, b);
            gold.push_back({a, b + 1});
        }
        std::vector<std::size_t> got;
        for (std::size_t c = 0; c < ctx.size(); ++c) {
            if (rng() % 3 == 0) got.push_back(c);
        }
        std::set<std::size_t> g, r;
        for (const auto& s : gold) {
            for (auto c = s.char_start; c < s.char_end; ++c) {
                if (ctx[c] != ' ') g.insert(c);
            }
        }
        for (auto c : got) {
            if (ctx[c] != ' ') r.insert(c);
        }
        if (g.empty()) continue;
        std::size_t hit = 0;
        for (auto c : r) hit += g.count(c);
        const auto e = retrieval_prf(ctx, got, gold);
        CHECK(e.recall == static_cast<double>(hit) / g.size());
        CHECK(e.precision == (r.empty() ? 0.0 : static_cast<double>(hit) / r.size()));

        // Enlarging the retrieved set never lowers recall.
        auto more = got;
        more.push_back(pos(rng));
        CHECK(retrieval_prf(ctx, more, gold).recall >= e.recall);
    }
}

TEST_CASE("token F1") {
    CHECK(qa_f1("Paris", golds({"Paris"})) == 1.0);
    const auto prf = token_prf("Barack Obama", "Obama");
    CHECK(prf.precision == 0.5);
    CHECK(prf.recall == 1.0);
    CHECK(prf.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(qa_f1("", golds({"x"})) == 0.0);
    CHECK(qa_f1("the cat sat", golds({"a dog", "cat sat"})) == 1.0);
    CHECK(qa_precision("Barack Obama", golds({"Obama"})) == 0.5);
    CHECK(qa_f1("a b", golds({"b a c"})) == doctest::Approx(qa_f1("b a c", golds({"a b"}))));
}

TEST_CASE("exact match") {
    CHECK(exact_match("The Answer", golds({"answer"})) == 1);
    CHECK(exact_match("42", golds({"43"})) == 0);
    CHECK(exact_match("yes", golds({"Yes."})) == 1);
    CHECK(normalize_answer("  An  Apple, the PIE!  ") == "apple pie");
}

TEST_CASE("numeric answers") {
    CHECK(parse_numeric_answer(" 12.50% ") == doctest::Approx(12.5));
    CHECK_FALSE(parse_numeric_answer("twelve").has_value());
    CHECK(numeric_match("3.0000001", "3"));
    CHECK_FALSE(numeric_match("3.1", "3"));
}

TEST_CASE("score switches on kind and metric") {
    QASample s;
    s.gold_answers = {"Obama"};
    CHECK(score_prediction(s, "Barack Obama") == doctest::Approx(2.0 / 3.0));
    s.metric = MetricKind::Precision;
    CHECK(score_prediction(s, "Barack Obama") == 0.5);
    s.metric = MetricKind::F1;
    s.answer_kind = AnswerKind::Numeric;
    s.gold_answers = {"4.5"};
    CHECK(score_prediction(s, "4.50") == 1.0);
    CHECK(score_prediction(s, "4.6") == 0.0);
    s.answer_kind = AnswerKind::Boolean;
    s.gold_answers = {"yes"};
    CHECK(score_prediction(s, "Yes.") == 1.0);
}

TEST_CASE("concatenated contexts shift spans") {
    QASample a, b;
    a.context = "A";
    a.gold_spans = {{0, 1}};
    b.context = "B";
    b.gold_spans = {{0, 1}};
    const std::vector<QASample> in{a, b};
    const auto out = concat_contexts(in, 2);
    CHECK(out[0].context == "A\n\nB");
    CHECK(out[1].context == "A\n\nB");
    CHECK(out[1].gold_spans[0] == EvidenceSpan{3, 4});
    const auto same = concat_contexts(in, 1);
    CHECK(same[0].context == "A");
    CHECK(same[1].gold_spans[0] == EvidenceSpan{0, 1});
    CHECK_THROWS_AS(concat_contexts(in, 0), InputError);
}

TEST_CASE("concatenation round trip keeps evidence bytes") {
    std::mt19937_64 rng(6);
    std::vector<QASample> samples;
    for (int i = 0; i < 23; ++i) {
        QASample s;
        s.id = std::to_string(i);
        s.context = "ctx " + std::to_string(i) + " " + std::string(rng() % 40 + 1, static_cast<char>('a' + i % 26));
        s.gold_spans = {{4, s.context.size()}};
        samples.push_back(s);
    }
    for (std::size_t g : {1u, 6u, 10u}) {
        const auto out = concat_contexts(samples, g);
        REQUIRE(out.size() == samples.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto& o = out[i].gold_spans[0];
            const auto& s = samples[i].gold_spans[0];
            CHECK(out[i].context.substr(o.char_start, o.char_end - o.char_start) ==
                  samples[i].context.substr(s.char_start, s.char_end - s.char_start));
        }
    }
}

TEST_CASE("ablation deltas reproduce the reported mean") {
    const std::map<std::string, double> none{
        {"DocMath", 3.47}, {"Qasper", 28.37}, {"HotpotQA", 28.48}, {"MuSiQue", 9.25}};
    const std::map<std::string, double> ver{
        {"DocMath", 2.80}, {"Qasper", 18.81}, {"HotpotQA", 23.80}, {"MuSiQue", 7.76}};
    const auto r = ablation_delta(none, ver);
    CHECK(r.delta.at("DocMath") == doctest::Approx(-0.67));
    CHECK(r.delta.at("Qasper") == doctest::Approx(-9.56));
    CHECK(r.delta.at("HotpotQA") == doctest::Approx(-4.68));
    CHECK(r.delta.at("MuSiQue") == doctest::Approx(-1.49));
    CHECK(std::abs(r.mean_delta - (-4.10)) < 0.005);

    const std::map<std::string, double> random_mask{
        {"DocMath", 4.24}, {"Qasper", 26.63}, {"HotpotQA", 26.60}, {"MuSiQue", 9.48}};
    CHECK(std::abs(ablation_delta(none, random_mask).mean_delta - (-0.66)) < 0.005);
    CHECK(ablation_delta(none, none).mean_delta == 0.0);
    CHECK_THROWS_AS(ablation_delta(none, {{"DocMath", 1.0}}), InputError);
}

TEST_CASE("sample jsonl round trip") {
    QASample s;
    s.id = "q1";
    s.context = "alpha beta";
    s.question = "first word?";
    s.gold_answers = {"alpha"};
    s.gold_spans = {{0, 5}};
    s.answer_kind = AnswerKind::Extractive;
    s.metric = MetricKind::Precision;
    s.dataset = "toy";
    const auto line = sample_to_json(s);
    CHECK(line.find('\n') == std::string::npos);
    const auto back = sample_from_json(line);
    CHECK(back.id == s.id);
    CHECK(back.gold_spans == s.gold_spans);
    CHECK(back.metric == MetricKind::Precision);
    CHECK(sample_to_json(back) == line);

    const auto many = parse_samples_jsonl(line + "\n\n" + line + "\n");
    CHECK(many.size() == 2);
    try {
        parse_samples_jsonl(line + "\n{bad\n");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    s.gold_spans = {{3, 99}};
    CHECK_THROWS(s.validate());
}
