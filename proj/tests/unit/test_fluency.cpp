#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "ctxpara/fluency.hpp"

using namespace ctxpara;
using namespace ctxpara::fluency;
namespace fs = std::filesystem;

namespace {

// Independent MCC from the confusion matrix.
double mcc_oracle(double tp, double tn, double fp, double fn) {
    const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    return den == 0.0 ? 0.0 : (tp * tn - fp * fn) / den;
}

std::vector<AcceptabilityExample> separable() {
    std::vector<AcceptabilityExample> out;
    const char* good[] = {"the cat sat on the mat .", "she reads a book .", "we went home early .",
                          "they like green apples .", "he wrote a letter ."};
    const char* bad[] = {"cat the mat on sat the .", "reads she book a .", "home went we early .",
                         "apples green like they .", "letter a wrote he ."};
    for (int rep = 0; rep < 4; ++rep)
        for (int i = 0; i < 5; ++i) {
            out.push_back({good[i], true, Domain::in_domain});
            out.push_back({bad[i], false, Domain::in_domain});
        }
    return out;
}

}  // namespace

TEST(Mcc, KnownCases) {
    const std::vector<bool> y = {true, false, true, false, true};
    EXPECT_EQ(mcc(y, y), 1.0);
    std::vector<bool> inv;
    for (bool b : y) inv.push_back(!b);
    EXPECT_EQ(mcc(inv, y), -1.0);
    EXPECT_EQ(mcc(std::vector<bool>(5, false), y), 0.0);
    EXPECT_THROW(mcc({true}, {true, false}), ValidationError);
    EXPECT_THROW(mcc({}, {}), ValidationError);
}

TEST(Mcc, MatchesOracleOnRandomData) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<bool> p, y;
        double tp = 0, tn = 0, fp = 0, fn = 0;
        for (int i = 0; i < 40; ++i) {
            const bool a = rng.uniform() < 0.5, b = rng.uniform() < 0.6;
            p.push_back(a);
            y.push_back(b);
            (a ? (b ? tp : fp) : (b ? fn : tn)) += 1;
        }
        EXPECT_NEAR(mcc(p, y), mcc_oracle(tp, tn, fp, fn), 1e-12);
        EXPECT_NEAR(mcc(p, y), mcc(y, p), 1e-12);
    }
}

TEST(Sigmoid, StableAtExtremes) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_NEAR(sigmoid(800.0), 1.0, 1e-15);
    EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-15);
    EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Model, ZeroStepsIsChance) {
    FluencyConfig cfg;
    cfg.steps = 0;
    LogisticFluencyModel m(cfg);
    train_fluency(m, separable());
    EXPECT_EQ(m.probability("anything at all"), 0.5);
    EXPECT_EQ(evaluate_fluency(m, separable()).mcc, 0.0);
}

TEST(Model, LearnsSeparableData) {
    FluencyConfig cfg;
    cfg.steps = 200;
    LogisticFluencyModel m(cfg);
    const auto res = train_fluency(m, separable());
    EXPECT_LT(res.loss_curve.back(), res.loss_curve.front());
    const auto ev = evaluate_fluency(m, separable());
    EXPECT_EQ(ev.mcc, 1.0);
    EXPECT_EQ(ev.accuracy, 1.0);
    EXPECT_EQ(ev.n, 40u);
}

TEST(Model, SingleClassRejected) {
    LogisticFluencyModel m(FluencyConfig{});
    std::vector<AcceptabilityExample> one = {{"a b", true, Domain::unknown}, {"c d", true, Domain::unknown}};
    EXPECT_THROW(train_fluency(m, one), ValidationError);
    EXPECT_THROW(m.probability(""), ValidationError);
}

TEST(Model, FeaturesScaled) {
    LogisticFluencyModel m(FluencyConfig{});
    // bias + 2 unigrams + 3 bigrams with boundary markers = 6 features.
    const auto f = m.features("a b");
    ASSERT_EQ(f.size(), 6u);
    for (const auto& x : f) EXPECT_NEAR(x.value, 1.0 / std::sqrt(6.0), 1e-12);
}

TEST(Model, SaveLoad) {
    FluencyConfig cfg;
    cfg.steps = 20;
    LogisticFluencyModel m(cfg);
    train_fluency(m, separable());
    const fs::path dir = fs::temp_directory_path() / "ctxpara_flu_ckpt";
    fs::remove_all(dir);
    m.save(dir);
    const auto back = LogisticFluencyModel::load(dir);
    EXPECT_EQ(back.probability("she reads a book ."), m.probability("she reads a book ."));
    fs::remove_all(dir);
}

TEST(Cola, ParseRowsAndErrors) {
    std::istringstream ok("src\t1\t\tThe cat sat.\nsrc\t0\t*\tCat the sat.\n");
    const auto rows = parse_cola_tsv(ok, Domain::out_of_domain);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].acceptable);
    EXPECT_FALSE(rows[1].acceptable);
    EXPECT_EQ(rows[1].domain, Domain::out_of_domain);
    std::istringstream bad("src\t1\t\tfine\nsrc\t2\t\tbad label\n");
    try {
        parse_cola_tsv(bad);
        FAIL();
    } catch (const IngestionError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::istringstream short_row("src\t1\tonly three\n");
    EXPECT_THROW(parse_cola_tsv(short_row), IngestionError);
}

TEST(Cola, FixtureTrainsAboveChance) {
    const fs::path fx = CTXPARA_FIXTURES;
    const auto train = load_cola_tsv(fx / "cola_train.tsv", Domain::in_domain);
    const auto dev = load_cola_tsv(fx / "cola_dev.tsv", Domain::in_domain);
    EXPECT_EQ(train.size(), 600u);
    LogisticFluencyModel m(FluencyConfig{});
    train_fluency(m, train);
    EXPECT_GT(evaluate_fluency(m, dev).mcc, 0.3);
}

TEST(Domain, RoundTrip) {
    for (auto d : {Domain::in_domain, Domain::out_of_domain, Domain::unknown}) EXPECT_EQ(parse_domain(to_string(d)), d);
}
