#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ctxpara/entailment.hpp"

using namespace ctxpara;
using namespace ctxpara::entailment;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

std::vector<corpus::EntailmentPair> topical_pairs(int n) {
    const char* topics[][2] = {{"customer: my parcel never arrived", "agent: the courier will deliver the parcel"},
                               {"customer: i was charged twice", "agent: the duplicate charge will be refunded"},
                               {"customer: i forgot my password", "agent: use the reset link to set a password"},
                               {"customer: the app keeps crashing", "agent: please update the app and restart"},
                               {"customer: can i change my plan", "agent: the plan change applies next month"}};
    std::vector<corpus::EntailmentPair> out;
    for (int i = 0; i < n; ++i) {
        const auto& t = topics[i % 5];
        out.push_back({std::string(t[0]) + " case " + std::to_string(i), std::string(t[1]) + " ref " + std::to_string(i),
                       "c" + std::to_string(i)});
    }
    return out;
}

}  // namespace

TEST(Mnr, UniformSimilarityIsLogB) {
    for (int b : {2, 3, 5, 8}) {
        Matrix c = Matrix::Constant(b, 4, 1.0), r = Matrix::Constant(b, 4, 2.0);
        EXPECT_NEAR(mnr_loss(c, r, 20.0), std::log(b), 1e-9);
    }
}

TEST(Mnr, OrthogonalPairClosedForm) {
    Matrix eye = Matrix::Identity(2, 2);
    EXPECT_NEAR(mnr_loss(eye, eye, 1.0), std::log1p(std::exp(-1.0)), 1e-12);
    // Scale s generalizes to log(1 + e^-s).
    EXPECT_NEAR(mnr_loss(eye, eye, 5.0), std::log1p(std::exp(-5.0)), 1e-12);
}

TEST(Mnr, ScaleInvarianceOfRows) {
    Rng rng(2);
    const Matrix c = random_matrix(4, 3, rng), r = random_matrix(4, 3, rng);
    EXPECT_NEAR(mnr_loss(c, r, 10.0), mnr_loss(3.0 * c, 0.5 * r, 10.0), 1e-12);
}

TEST(Mnr, GradientMatchesFiniteDifferences) {
    Rng rng(3);
    for (int inst = 0; inst < 10; ++inst) {
        const int b = 2 + inst % 4, d = 3;
        const Matrix c = random_matrix(b, d, rng), r = random_matrix(b, d, rng);
        Matrix gc, gr;
        mnr_loss(c, r, 7.0, &gc, &gr);
        const double h = 1e-6;
        for (int i = 0; i < b; ++i)
            for (int k = 0; k < d; ++k) {
                Matrix cp = c, cm = c;
                cp(i, k) += h;
                cm(i, k) -= h;
                EXPECT_NEAR(gc(i, k), (mnr_loss(cp, r, 7.0) - mnr_loss(cm, r, 7.0)) / (2 * h), 1e-6);
                Matrix rp = r, rm = r;
                rp(i, k) += h;
                rm(i, k) -= h;
                EXPECT_NEAR(gr(i, k), (mnr_loss(c, rp, 7.0) - mnr_loss(c, rm, 7.0)) / (2 * h), 1e-6);
            }
    }
}

TEST(Mnr, BatchTooSmall) {
    Matrix one = Matrix::Ones(1, 3);
    EXPECT_THROW(mnr_loss(one, one, 1.0), ValidationError);
}

TEST(Encoder, FeaturesAndDeterminism) {
    EncoderConfig cfg;
    cfg.seed = 4;
    HashEncoder enc(cfg);
    const auto f = enc.features("Hello, World again");
    ASSERT_EQ(f.size(), 1u + 3u + 2u);
    EXPECT_EQ(f[0], enc.bucket("<bias>"));
    EXPECT_EQ(f[1], enc.bucket("u:hello"));
    EXPECT_EQ(f[4], enc.bucket("b:hello world"));
    EXPECT_TRUE(enc.embed("hi there").isApprox(HashEncoder(cfg).embed("hi there")));
    EXPECT_THROW(enc.embed(""), ValidationError);
    EXPECT_EQ(enc.embed("x").size(), cfg.dim);
}

TEST(Encoder, SaveLoad) {
    HashEncoder enc(EncoderConfig{});
    const fs::path dir = fs::temp_directory_path() / "ctxpara_enc_ckpt";
    fs::remove_all(dir);
    enc.save(dir);
    const auto back = HashEncoder::load(dir);
    EXPECT_TRUE(back.table().isApprox(enc.table()));
    EXPECT_EQ(back.config().to_json(), enc.config().to_json());
    fs::remove_all(dir);
}

TEST(Score, CosineAndEntailmentRange) {
    Vector a(2), b(2), z = Vector::Zero(2);
    a << 1, 0;
    b << -1, 0;
    EXPECT_NEAR(cosine(a, b), -1.0, 1e-12);
    EXPECT_EQ(cosine(a, z), 0.0);
    HashEncoder enc(EncoderConfig{});
    const double s = entailment_score(enc, "customer: hi", "agent: hello");
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_NEAR(entailment_score(enc, "same text", "same text"), 1.0, 1e-12);
    EXPECT_NEAR(entailment_score(enc, "a b", "c d"), entailment_score(enc, "c d", "a b"), 1e-12);
}

TEST(Training, ImprovesInBatchAccuracyAndDeterministic) {
    const auto pairs = topical_pairs(80);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 8;
    cfg.seed = 5;
    HashEncoder a(cfg.encoder), b(cfg.encoder);
    const double before = in_batch_accuracy(a, pairs, 5);
    const auto res = train_entailment(a, pairs, cfg);
    train_entailment(b, pairs, cfg);
    const double after = in_batch_accuracy(a, pairs, 5);
    EXPECT_GT(after, before);
    EXPECT_LT(res.loss_curve.back(), res.loss_curve.front());
    EXPECT_TRUE(a.table().isApprox(b.table()));
}

TEST(Training, TooFewPairs) {
    HashEncoder enc(EncoderConfig{});
    TrainConfig cfg;
    cfg.batch_size = 16;
    EXPECT_THROW(train_entailment(enc, topical_pairs(20), cfg), ValidationError);
}

TEST(Nuc, TiesArePessimistic) {
    NucCase c{"ctx", "true", {}};
    for (int i = 0; i < 9; ++i) c.distractors.push_back("d" + std::to_string(i));
    const auto m = evaluate_nuc([](const std::string&, const std::string&) { return 0.5; }, {c});
    EXPECT_EQ(m.r_at_1, 0.0);
    EXPECT_EQ(m.r_at_2, 0.0);
    EXPECT_NEAR(m.mrr, 0.1, 1e-12);
}

TEST(Nuc, RankTwo) {
    NucCase c{"ctx", "true", {}};
    for (int i = 0; i < 9; ++i) c.distractors.push_back("d" + std::to_string(i));
    const auto m = evaluate_nuc(
        [](const std::string&, const std::string& r) { return r == "d4" ? 2.0 : r == "true" ? 1.0 : 0.0; }, {c});
    EXPECT_EQ(m.r_at_1, 0.0);
    EXPECT_EQ(m.r_at_2, 1.0);
    EXPECT_NEAR(m.mrr, 0.5, 1e-12);
    EXPECT_EQ(m.cases, 1u);
}

TEST(Nuc, BuildCasesExcludeTrueAndDuplicates) {
    auto pairs = topical_pairs(30);
    pairs[3].response_text = pairs[0].response_text;  // duplicate string
    const auto cases = build_nuc_cases(pairs, 9);
    ASSERT_EQ(cases.size(), pairs.size());
    for (const auto& c : cases) {
        ASSERT_EQ(c.distractors.size(), 9u);
        std::set<std::string> seen(c.distractors.begin(), c.distractors.end());
        EXPECT_EQ(seen.size(), 9u);
        EXPECT_EQ(seen.count(c.response), 0u);
    }
    const auto again = build_nuc_cases(pairs, 9);
    EXPECT_EQ(again[5].distractors, cases[5].distractors);
    EXPECT_THROW(build_nuc_cases(topical_pairs(5), 1), ValidationError);
}

TEST(Nuc, SaveLoadEnforcesNine) {
    const auto cases = build_nuc_cases(topical_pairs(20), 2);
    const fs::path p = fs::temp_directory_path() / "ctxpara_nuc_cases.jsonl";
    save_nuc_cases(p, cases);
    const auto back = load_nuc_cases(p);
    ASSERT_EQ(back.size(), cases.size());
    EXPECT_EQ(back[0].distractors, cases[0].distractors);
    write_file_atomic(p, R"({"context":"c","response":"r","distractors":["a","b"]})" "\n");
    EXPECT_THROW(load_nuc_cases(p), Error);
    fs::remove(p);
}
