#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxpara/corpus.hpp"
#include "ctxpara/generator.hpp"
#include "ctxpara/metrics.hpp"

namespace ctxpara::evalharness {

/// The seven approaches, in report order.
const std::vector<std::string>& approach_names();

struct ApproachSpec {
    std::string name;
    generator::PromptRecipe recipe;
    std::filesystem::path checkpoint;

    /// Spec with the canonical recipe for `name`.
    static ApproachSpec make(const std::string& name, std::filesystem::path checkpoint);
    /// Throws ValidationError when the recipe contradicts the name.
    void validate() const;
};

struct GenerationRecord {
    std::string sample_id;
    std::string approach;
    std::string generated;
};

nlohmann::json to_json(const GenerationRecord& g);
std::string serialize_generations(const std::vector<GenerationRecord>& gens);
std::vector<GenerationRecord> load_generations(const std::filesystem::path& path);

/// One paraphrase per sample under the approach's recipe; per-sample seeds
/// derive from `seed` and the sample id.
std::vector<GenerationRecord> generate_for(const generator::LanguageModel& model, const ApproachSpec& spec,
                                           const std::vector<corpus::Sample>& samples,
                                           const generator::DecodeConfig& decode, int response_budget,
                                           std::uint64_t seed);

/// Scores generations against their samples; every generation must name a known sample.
std::vector<metrics::ScoreBreakdown> score_generations(const metrics::CompositeEvaluator& evaluator,
                                                       const std::vector<GenerationRecord>& gens,
                                                       const std::vector<corpus::Sample>& samples);

struct ApproachRun {
    std::vector<GenerationRecord> generations;
    std::vector<metrics::ScoreBreakdown> scores;
};

/// Loads the checkpoint (failing before any generation if it is missing),
/// generates and scores.
ApproachRun run_approach(const ApproachSpec& spec, const std::vector<corpus::Sample>& samples,
                         const metrics::CompositeEvaluator& evaluator, const generator::DecodeConfig& decode,
                         int response_budget, std::uint64_t seed);

struct ReportRow {
    std::string approach;
    std::size_t n = 0;
    double semantic_similarity = 0.0;
    double textual_entailment = 0.0;
    double expression_diversity = 0.0;
    double fluency = 0.0;
    double overall = 0.0;
};

/// Column means; overall is the mean of the per-sample composites.
ReportRow aggregate(const std::string& approach, const std::vector<metrics::ScoreBreakdown>& scores);

struct TTest {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Pooled-variance two-sample t test, two-sided. Throws ValidationError when
/// a side has fewer than 2 values or both sides have zero variance.
TTest t_test(const std::vector<double>& a, const std::vector<double>& b);
/// Same test from summary statistics (sample standard deviations).
TTest t_test_summary(double mean_a, double sd_a, std::size_t n_a, double mean_b, double sd_b, std::size_t n_b);

// ---------------------------------------------------------------------------
// Human evaluation.

inline constexpr std::array<const char*, 4> kDimensions = {"semantic_similarity", "textual_entailment",
                                                           "expression_diversity", "fluency"};

struct HumanRecord {
    std::string sample_id;
    std::string annotator_id;
    std::string approach;
    std::array<int, 4> ratings{};  // kDimensions order
    double overall() const;
};

struct HumanEvalSet {
    std::vector<HumanRecord> records;
};

/// CSV with header sample_id,annotator_id,approach,<four dimensions>.
/// Ratings outside 1..5 raise IngestionError with the 1-based file line.
HumanEvalSet parse_human_labels(std::istream& in);
HumanEvalSet load_human_labels(const std::filesystem::path& path);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population
};

struct HumanRow {
    std::string approach;
    std::size_t records = 0;
    std::array<MeanStd, 4> dimensions{};
    MeanStd overall;
};

std::vector<HumanRow> human_report(const HumanEvalSet& set);

double population_std(const std::vector<double>& xs);
/// nullopt when either series is constant. Throws ValidationError below 3 pairs.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson on average ranks.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);
std::vector<double> average_ranks(const std::vector<double>& x);

struct Agreement {
    std::string dimension;
    std::size_t pairs = 0;
    std::optional<double> pearson;
    std::optional<double> spearman;
};

/// Pairs automated scores with annotator ratings averaged per (approach,
/// sample). `scores` maps approach -> per-sample breakdowns.
std::vector<Agreement> auto_human_agreement(const std::map<std::string, std::vector<metrics::ScoreBreakdown>>& scores,
                                            const HumanEvalSet& human);

// ---------------------------------------------------------------------------
// Reports.

struct Significance {
    std::string best;
    std::string second;
    std::optional<TTest> test;
    std::string note;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::optional<Significance> significance;
    std::vector<HumanRow> human;
    std::vector<Agreement> agreement;
};

/// Rows in canonical approach order (unknown names last, sorted), plus a
/// best-vs-second significance test on per-sample composites.
EvalReport build_report(const std::map<std::string, std::vector<metrics::ScoreBreakdown>>& scores,
                        const std::optional<HumanEvalSet>& human = std::nullopt);

nlohmann::json to_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
std::string report_markdown(const EvalReport& report);

/// Reads every <approach>.jsonl in a directory.
std::map<std::string, std::vector<metrics::ScoreBreakdown>> load_score_dir(const std::filesystem::path& dir);

}  // namespace ctxpara::evalharness
