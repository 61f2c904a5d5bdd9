#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "ctxpara/evalharness.hpp"

using namespace ctxpara;
using namespace ctxpara::evalharness;
namespace fs = std::filesystem;

namespace {

std::vector<metrics::ScoreBreakdown> scores_with(double base, int n, double spread) {
    std::vector<metrics::ScoreBreakdown> out;
    for (int i = 0; i < n; ++i) {
        const double d = spread * ((i % 5) - 2) / 2.0;
        out.push_back(metrics::make_breakdown("s" + std::to_string(i), base + d, base, base - d, base));
    }
    return out;
}

const char* kHeader = "sample_id,annotator_id,approach,semantic_similarity,textual_entailment,expression_diversity,fluency\n";

}  // namespace

TEST(Approaches, CanonicalOrderAndValidation) {
    EXPECT_EQ(approach_names().size(), 7u);
    EXPECT_EQ(approach_names().front(), "pretrained");
    EXPECT_EQ(approach_names().back(), "rl_finetuned");
    auto spec = ApproachSpec::make("only_context", "x");
    EXPECT_NO_THROW(spec.validate());
    spec.recipe.use_controls = true;
    EXPECT_THROW(spec.validate(), ValidationError);
    EXPECT_THROW(ApproachSpec::make("beam_search", "x"), ValidationError);
}

TEST(Aggregate, ColumnMeans) {
    const std::vector<metrics::ScoreBreakdown> s = {metrics::make_breakdown("a", 0.2, 0.4, 0.6, 0.8),
                                                    metrics::make_breakdown("b", 0.4, 0.6, 0.8, 1.0)};
    const auto r = aggregate("x", s);
    EXPECT_EQ(r.n, 2u);
    EXPECT_NEAR(r.semantic_similarity, 0.3, 1e-12);
    EXPECT_NEAR(r.fluency, 0.9, 1e-12);
    EXPECT_NEAR(r.overall, 0.6, 1e-12);
    EXPECT_NEAR(r.overall, (r.semantic_similarity + r.textual_entailment + r.expression_diversity + r.fluency) / 4,
                1e-12);
}

TEST(Aggregate, PublishedRowsReproduceOverall) {
    const double rows[][5] = {{.268, .559, .954, .859, .660}, {.632, .695, .762, .886, .744},
                              {.821, .748, .362, .825, .689}, {.812, .752, .390, .829, .696},
                              {.687, .695, .589, .729, .675}, {.732, .731, .560, .867, .722},
                              {.671, .726, .742, .873, .753}};
    for (const auto& r : rows) {
        const auto row = aggregate("x", {metrics::make_breakdown("s", r[0], r[1], r[2], r[3])});
        EXPECT_LE(std::abs(row.overall - r[4]), 0.0005 + 1e-9);
    }
}

TEST(TTest, SummaryMatchesHandFormula) {
    const auto t = t_test_summary(0.753, 0.095, 5000, 0.744, 0.073, 5000);
    const double sp2 = (4999 * 0.095 * 0.095 + 4999 * 0.073 * 0.073) / 9998.0;
    const double expected = 0.009 / std::sqrt(sp2 * (2.0 / 5000.0));
    EXPECT_NEAR(t.t, expected, 1e-9);
    EXPECT_EQ(t.df, 9998.0);
    EXPECT_LT(t.p, 1e-6);
}

TEST(TTest, KnownCriticalValue) {
    // Two-sided 5% critical value for df = 10 is 2.228139.
    const double s = 1.0, n = 6.0;
    const double diff = 2.228139 * std::sqrt(s * s * 2.0 / n);
    EXPECT_NEAR(t_test_summary(diff, s, 6, 0.0, s, 6).p, 0.05, 1e-5);
    EXPECT_EQ(t_test_summary(1.0, 0.5, 10, 1.0, 0.5, 10).p, 1.0);
}

TEST(TTest, SamplesAgreeWithSummary) {
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 6.0}, b = {2.0, 2.5, 2.0, 1.0};
    auto mean_sd = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= x.size();
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        return std::make_pair(m, std::sqrt(ss / (x.size() - 1)));
    };
    const auto [ma, sa] = mean_sd(a);
    const auto [mb, sb] = mean_sd(b);
    const auto t1 = t_test(a, b), t2 = t_test_summary(ma, sa, a.size(), mb, sb, b.size());
    EXPECT_NEAR(t1.t, t2.t, 1e-12);
    EXPECT_NEAR(t1.p, t2.p, 1e-12);
    EXPECT_THROW(t_test({1.0}, b), ValidationError);
    EXPECT_THROW(t_test({1.0, 1.0}, {2.0, 2.0}), ValidationError);
}

TEST(Human, ParseAndReport) {
    std::istringstream in(std::string(kHeader) +
                          "s1,a1,only_context,5,4,3,2\n"
                          "s1,a2,only_context,3,4,5,4\n"
                          "s1,a1,rl_finetuned,1,1,1,1\n");
    const auto set = parse_human_labels(in);
    ASSERT_EQ(set.records.size(), 3u);
    EXPECT_NEAR(set.records[0].overall(), 3.5, 1e-12);
    const auto rows = human_report(set);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].approach, "only_context");
    EXPECT_EQ(rows[0].records, 2u);
    EXPECT_NEAR(rows[0].dimensions[0].mean, 4.0, 1e-12);
    EXPECT_NEAR(rows[0].dimensions[0].std, 1.0, 1e-12);  // population std of {5, 3}
    EXPECT_NEAR(rows[0].overall.mean, 3.75, 1e-12);
}

TEST(Human, RejectsBadInput) {
    std::istringstream bad_rating(std::string(kHeader) + "s1,a1,only_context,5,4,3,2\ns1,a1,only_context,6,4,3,2\n");
    try {
        parse_human_labels(bad_rating);
        FAIL();
    } catch (const IngestionError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    std::istringstream bad_header("id,ann,approach,a,b,c,d\n");
    EXPECT_THROW(parse_human_labels(bad_header), IngestionError);
    std::istringstream short_row(std::string(kHeader) + "s1,a1,only_context,5,4\n");
    EXPECT_THROW(parse_human_labels(short_row), IngestionError);
}

TEST(Human, Fixture) {
    const auto set = load_human_labels(fs::path(CTXPARA_FIXTURES) / "human_labels.csv");
    EXPECT_EQ(set.records.size(), 1600u);
    EXPECT_EQ(human_report(set).size(), 4u);
}

TEST(Correlation, PearsonSpearman) {
    EXPECT_NEAR(*pearson({1, 2, 3, 4}, {2, 4, 6, 8}), 1.0, 1e-12);
    EXPECT_NEAR(*pearson({1, 2, 3, 4}, {8, 6, 4, 2}), -1.0, 1e-12);
    EXPECT_FALSE(pearson({1, 1, 1}, {1, 2, 3}).has_value());
    EXPECT_THROW(pearson({1, 2}, {1, 2}), ValidationError);
    EXPECT_NEAR(*spearman({1, 2, 3, 4}, {1, 4, 9, 16}), 1.0, 1e-12);
    EXPECT_EQ(average_ranks({10, 20, 20, 30}), (std::vector<double>{1.0, 2.5, 2.5, 4.0}));
    EXPECT_NEAR(population_std({2, 4, 4, 4, 5, 5, 7, 9}), 2.0, 1e-12);
}

TEST(Report, OrderSignificanceAndFormats) {
    std::map<std::string, std::vector<metrics::ScoreBreakdown>> scores = {
        {"rl_finetuned", scores_with(0.7, 20, 0.1)},
        {"only_context", scores_with(0.6, 20, 0.1)},
        {"pretrained", scores_with(0.3, 20, 0.1)},
    };
    const auto rep = build_report(scores);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_EQ(rep.rows[0].approach, "pretrained");
    EXPECT_EQ(rep.rows[2].approach, "rl_finetuned");
    ASSERT_TRUE(rep.significance.has_value());
    EXPECT_EQ(rep.significance->best, "rl_finetuned");
    EXPECT_EQ(rep.significance->second, "only_context");
    ASSERT_TRUE(rep.significance->test.has_value());
    EXPECT_GT(rep.significance->test->t, 0.0);
    const auto csv = report_csv(rep);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_NE(csv.find("rl_finetuned,20,"), std::string::npos);
    EXPECT_NE(report_markdown(rep).find("| rl_finetuned | 20 |"), std::string::npos);
    EXPECT_EQ(to_json(rep).at("rows").size(), 3u);
}

TEST(Report, ScoreDirRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "ctxpara_score_dir";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto s = scores_with(0.5, 5, 0.1);
    write_file_atomic(dir / "only_context.jsonl", metrics::serialize_scores(s));
    const auto loaded = load_score_dir(dir);
    ASSERT_EQ(loaded.count("only_context"), 1u);
    EXPECT_EQ(loaded.at("only_context").size(), 5u);
    fs::remove_all(dir);
}

TEST(Agreement, PairsByApproachAndSample) {
    std::map<std::string, std::vector<metrics::ScoreBreakdown>> scores;
    std::ostringstream csv;
    csv << kHeader;
    for (int i = 0; i < 6; ++i) {
        const double v = 0.1 + 0.15 * i;
        scores["only_context"].push_back(metrics::make_breakdown("s" + std::to_string(i), v, v, v, v));
        const int r = 1 + i % 5;
        csv << "s" << i << ",a1,only_context," << r << "," << r << "," << r << "," << r << "\n";
    }
    std::istringstream in(csv.str());
    const auto agreement = auto_human_agreement(scores, parse_human_labels(in));
    ASSERT_FALSE(agreement.empty());
    EXPECT_EQ(agreement[0].pairs, 6u);
    ASSERT_TRUE(agreement[0].pearson.has_value());
    EXPECT_GT(*agreement[0].pearson, 0.0);
}

TEST(Generations, JsonlRoundTrip) {
    const std::vector<GenerationRecord> g = {{"s1", "only_context", "hello there"}, {"s2", "only_context", ""}};
    const fs::path p = fs::temp_directory_path() / "ctxpara_gens.jsonl";
    write_file_atomic(p, serialize_generations(g));
    const auto back = load_generations(p);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].generated, "hello there");
    EXPECT_EQ(back[1].generated, "");
    fs::remove(p);
}

TEST(RunApproach, MissingCheckpointFailsFast) {
    entailment::HashEncoder enc(entailment::EncoderConfig{});
    metrics::HashTokenEmbedder emb(enc);
    fluency::LogisticFluencyModel flu(fluency::FluencyConfig{});
    metrics::CompositeEvaluator ev({&enc, &flu, &emb, {}});
    const auto spec = ApproachSpec::make("only_context", "/nonexistent/ctxpara/ckpt");
    EXPECT_THROW(run_approach(spec, {}, ev, generator::DecodeConfig{}, 8, 1), Error);
}
