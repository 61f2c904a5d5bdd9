#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "ctxpara/metrics.hpp"

using namespace ctxpara;
using namespace ctxpara::metrics;
namespace fs = std::filesystem;

namespace {

// One-hot vector per distinct lowercase word: cosine is 1 for equal words, 0 otherwise.
class OneHotEmbedder : public TokenEmbedder {
  public:
    std::vector<Eigen::VectorXd> embed_tokens(std::string_view text) const override {
        std::vector<Eigen::VectorXd> out;
        for (const auto& w : word_punct_split(text)) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(64);
            v(static_cast<Eigen::Index>(fnv1a64(ascii_lower(w)) % 64)) = 1.0;
            out.push_back(v);
        }
        if (out.empty()) throw ValidationError("empty");
        return out;
    }
};

class ThrowingClassifier : public fluency::AcceptabilityClassifier {
  public:
    double probability(std::string_view) const override { throw Error("model crashed"); }
};

class ConstantClassifier : public fluency::AcceptabilityClassifier {
  public:
    double probability(std::string_view) const override { return 0.8; }
};

}  // namespace

TEST(Bleu, IdenticalIsOne) {
    EXPECT_DOUBLE_EQ(bleu("the order ships today .", "the order ships today ."), 1.0);
    EXPECT_EQ(inverse_bleu("Hi.", "Hi."), 0.0);
}

TEST(Bleu, HandComputedExample) {
    // cand: the cat sat on mat (5), ref: the cat sat on the mat (6)
    // p1 = 5/5, p2 = 3/4, p3 = 2/3, p4 = 1/2, BP = exp(1 - 6/5)
    const double expected = std::exp(1.0 - 6.0 / 5.0) * std::pow(1.0 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
    EXPECT_NEAR(bleu("the cat sat on mat", "the cat sat on the mat"), expected, 1e-12);
}

TEST(Bleu, ShortCandidateUsesAvailableOrders) {
    // Two tokens: orders 1..2 only.
    EXPECT_NEAR(bleu("thank you", "thank you"), 1.0, 1e-12);
    EXPECT_GT(bleu("thank you", "thank you so much"), 0.0);
}

TEST(Bleu, SmoothingModes) {
    BleuConfig none;
    none.smoothing = Smoothing::none;
    EXPECT_EQ(bleu("a b c d", "a x b y", none), 0.0);
    BleuConfig eps;
    const double e = bleu("a b c d", "a x b y", eps);
    EXPECT_GT(e, 0.0);
    EXPECT_LT(e, 1e-3);
    BleuConfig add1;
    add1.smoothing = Smoothing::add_one;
    // p1 = 2/4, p2 = 1/4, p3 = 1/3, p4 = 1/2; equal lengths so BP = 1.
    EXPECT_NEAR(bleu("a b c d", "a x b y", add1), std::pow(0.5 * 0.25 * (1.0 / 3.0) * 0.5, 0.25), 1e-12);
}

TEST(Bleu, CaseFolding) {
    BleuConfig cs;
    cs.case_fold = false;
    EXPECT_DOUBLE_EQ(bleu("Hello There", "hello there"), 1.0);
    EXPECT_LT(bleu("Hello There", "hello there", cs), 1.0);
}

TEST(Bleu, EmptyInputs) {
    EXPECT_EQ(bleu("", "reference text"), 0.0);
    EXPECT_THROW(bleu("candidate", ""), ValidationError);
}

TEST(Bleu, RangeAndComplement) {
    Rng rng(1);
    const std::vector<std::string> words = {"the", "order", "is", "late", "refund", "now", ",", "."};
    for (int i = 0; i < 200; ++i) {
        std::string a, b;
        for (int k = 0; k < 1 + static_cast<int>(rng.uniform_index(9)); ++k) a += words[rng.uniform_index(8)] + " ";
        for (int k = 0; k < 1 + static_cast<int>(rng.uniform_index(9)); ++k) b += words[rng.uniform_index(8)] + " ";
        const double x = bleu(a, b);
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        EXPECT_EQ(inverse_bleu(a, b) + x, 1.0);
    }
}

TEST(Bleu, ConfigJsonRoundTrip) {
    BleuConfig c;
    c.smoothing = Smoothing::add_one;
    c.max_ngram_order = 3;
    EXPECT_EQ(BleuConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Similarity, GreedyF1) {
    OneHotEmbedder e;
    EXPECT_NEAR(semantic_similarity(e, "order ships today", "today order ships"), 1.0, 1e-12);
    // precision 2/2, recall 2/4 -> F1 2/3
    EXPECT_NEAR(semantic_similarity(e, "order ships", "the order ships today"), 2.0 / 3.0, 1e-12);
    EXPECT_EQ(semantic_similarity(e, "alpha", "beta"), 0.0);
    EXPECT_THROW(semantic_similarity(e, "", "x"), ValidationError);
}

TEST(Similarity, HashTokenEmbedderContextIndependent) {
    entailment::HashEncoder enc(entailment::EncoderConfig{});
    HashTokenEmbedder e(enc);
    const auto a = e.embed_tokens("refund now");
    const auto b = e.embed_tokens("now refund");
    EXPECT_TRUE(a[0].isApprox(b[1]));
    EXPECT_NEAR(semantic_similarity(e, "refund now", "refund now"), 1.0, 1e-12);
}

TEST(Breakdown, MeanAndValidation) {
    const auto s = make_breakdown("x", 0.2, 0.4, 0.6, 0.8);
    EXPECT_NEAR(s.composite, 0.5, 1e-15);
    try {
        make_breakdown("x", 0.2, 1.2, 0.6, 0.8);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("textual_entailment"), std::string::npos);
    }
    EXPECT_THROW(make_breakdown("x", NAN, 0.1, 0.1, 0.1), ValidationError);
}

TEST(Breakdown, JsonRoundTripAndTamperCheck) {
    const std::vector<ScoreBreakdown> v = {make_breakdown("a", 0.1, 0.2, 0.3, 0.4),
                                           make_breakdown("b", 0.9, 0.8, 0.7, 0.6)};
    const fs::path p = fs::temp_directory_path() / "ctxpara_scores.jsonl";
    write_file_atomic(p, serialize_scores(v));
    const auto back = load_scores(p);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].sample_id, "b");
    EXPECT_EQ(back[1].composite, v[1].composite);
    auto j = to_json(v[0]);
    j["composite"] = 0.9;
    EXPECT_THROW(breakdown_from_json(j), ValidationError);
    fs::remove(p);
}

TEST(Composite, EmptyGenerationScoresZero) {
    entailment::HashEncoder enc(entailment::EncoderConfig{});
    OneHotEmbedder emb;
    ConstantClassifier flu;
    CompositeEvaluator ev({&enc, &flu, &emb, {}});
    const auto s = ev.score("customer: hi", "hello there", "   ", "id");
    EXPECT_EQ(s.composite, 0.0);
    EXPECT_EQ(s.sample_id, "id");
}

TEST(Composite, ComponentsCombine) {
    entailment::HashEncoder enc(entailment::EncoderConfig{});
    OneHotEmbedder emb;
    ConstantClassifier flu;
    CompositeEvaluator ev({&enc, &flu, &emb, {}});
    const auto s = ev.score("customer: where is it", "your order ships today", "your order ships today");
    EXPECT_NEAR(s.semantic_similarity, 1.0, 1e-12);
    EXPECT_EQ(s.expression_diversity, 0.0);
    EXPECT_EQ(s.fluency, 0.8);
    EXPECT_NEAR(s.composite, (1.0 + s.textual_entailment + 0.0 + 0.8) / 4.0, 1e-12);
    EXPECT_EQ(ev.describe().at("weights").size(), 4u);
}

TEST(Composite, ComponentErrorNamesComponent) {
    entailment::HashEncoder enc(entailment::EncoderConfig{});
    OneHotEmbedder emb;
    ThrowingClassifier flu;
    CompositeEvaluator ev({&enc, &flu, &emb, {}});
    try {
        ev.score("customer: hi", "hello", "hello there");
        FAIL();
    } catch (const ComponentError& e) {
        EXPECT_EQ(e.component(), "fluency");
    }
    EXPECT_THROW(CompositeEvaluator({&enc, nullptr, &emb, {}}), ComponentError);
}
