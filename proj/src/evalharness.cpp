#include "ctxpara/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace ctxpara::evalharness {

using nlohmann::json;

const std::vector<std::string>& approach_names() {
    static const std::vector<std::string> names = {"pretrained",           "only_context",
                                                   "only_control_words",   "context_and_control",
                                                   "context_control_noise", "context_control_sampling",
                                                   "rl_finetuned"};
    return names;
}

ApproachSpec ApproachSpec::make(const std::string& name, std::filesystem::path checkpoint) {
    return {name, generator::recipe_for(name), std::move(checkpoint)};
}

void ApproachSpec::validate() const {
    const auto canonical = generator::recipe_for(name);
    if (recipe.use_context != canonical.use_context || recipe.use_controls != canonical.use_controls)
        throw ValidationError("recipe for '" + name + "' does not match its definition");
    if (!recipe.use_controls && (recipe.noise_fraction > 0.0 || recipe.sample_controls))
        throw ValidationError("recipe for '" + name + "' perturbs control words it does not use");
}

json to_json(const GenerationRecord& g) {
    return {{"sample_id", g.sample_id}, {"approach", g.approach}, {"generated", g.generated}};
}

std::string serialize_generations(const std::vector<GenerationRecord>& gens) {
    std::string out;
    for (const auto& g : gens) out += to_json(g).dump() + "\n";
    return out;
}

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
    std::vector<GenerationRecord> out;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("sample_id").get<std::string>(), j.value("approach", std::string()),
                           j.at("generated").get<std::string>()});
        } catch (const json::exception& e) {
            throw IngestionError(n, path.string() + ": " + e.what());
        }
    }
    return out;
}

std::vector<GenerationRecord> generate_for(const generator::LanguageModel& model, const ApproachSpec& spec,
                                           const std::vector<corpus::Sample>& samples,
                                           const generator::DecodeConfig& decode, int response_budget,
                                           std::uint64_t seed) {
    spec.validate();
    std::vector<GenerationRecord> out;
    for (const auto& s : samples) {
        Rng rng(derive_seed(seed, "generate/" + spec.name + "/" + s.id));
        const auto in = generator::prompt_inputs(s, spec.recipe, {}, false, rng);
        const auto prompt = generator::assemble_prompt(in.context, in.controls, model.tokenizer(),
                                                       model.max_sequence_length(), response_budget);
        const auto gen = generator::generate(model, prompt, decode, rng);
        out.push_back({s.id, spec.name, gen.text});
    }
    return out;
}

std::vector<metrics::ScoreBreakdown> score_generations(const metrics::CompositeEvaluator& evaluator,
                                                       const std::vector<GenerationRecord>& gens,
                                                       const std::vector<corpus::Sample>& samples) {
    std::map<std::string, const corpus::Sample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<metrics::ScoreBreakdown> out;
    for (const auto& g : gens) {
        const auto it = by_id.find(g.sample_id);
        if (it == by_id.end()) throw ValidationError("generation for unknown sample '" + g.sample_id + "'");
        const auto& s = *it->second;
        out.push_back(evaluator.score(corpus::flatten_context(s.context), s.response, g.generated, g.sample_id));
    }
    return out;
}

ApproachRun run_approach(const ApproachSpec& spec, const std::vector<corpus::Sample>& samples,
                         const metrics::CompositeEvaluator& evaluator, const generator::DecodeConfig& decode,
                         int response_budget, std::uint64_t seed) {
    spec.validate();
    if (!std::filesystem::exists(spec.checkpoint / "manifest.json"))
        throw Error("checkpoint for '" + spec.name + "' not found: " + spec.checkpoint.string());
    const auto model = generator::load_checkpoint(spec.checkpoint);
    ApproachRun run;
    run.generations = generate_for(*model, spec, samples, decode, response_budget, seed);
    run.scores = score_generations(evaluator, run.generations, samples);
    return run;
}

ReportRow aggregate(const std::string& approach, const std::vector<metrics::ScoreBreakdown>& scores) {
    if (scores.empty()) throw ValidationError("aggregate: no scores for '" + approach + "'");
    ReportRow row{approach, scores.size()};
    for (const auto& s : scores) {
        row.semantic_similarity += s.semantic_similarity;
        row.textual_entailment += s.textual_entailment;
        row.expression_diversity += s.expression_diversity;
        row.fluency += s.fluency;
        row.overall += s.composite;
    }
    const double n = static_cast<double>(scores.size());
    row.semantic_similarity /= n;
    row.textual_entailment /= n;
    row.expression_diversity /= n;
    row.fluency /= n;
    row.overall /= n;
    return row;
}

namespace {

double two_sided_p(double t, double df) {
    if (t == 0.0) return 1.0;
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

TTest t_test_summary(double mean_a, double sd_a, std::size_t n_a, double mean_b, double sd_b, std::size_t n_b) {
    if (n_a < 2 || n_b < 2) throw ValidationError("t_test needs at least 2 values per side");
    if (sd_a < 0.0 || sd_b < 0.0) throw ValidationError("t_test: negative standard deviation");
    if (sd_a == 0.0 && sd_b == 0.0) throw ValidationError("t_test: both samples have zero variance");
    const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b);
    const double df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * sd_a * sd_a + (nb - 1.0) * sd_b * sd_b) / df;
    const double t = (mean_a - mean_b) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    return {t, df, two_sided_p(t, df)};
}

TTest t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("t_test needs at least 2 values per side");
    const auto sample_sd = [](const std::vector<double>& xs) {
        const double m = mean_of(xs);
        double ss = 0.0;
        for (double x : xs) ss += (x - m) * (x - m);
        return std::sqrt(ss / static_cast<double>(xs.size() - 1));
    };
    return t_test_summary(mean_of(a), sample_sd(a), a.size(), mean_of(b), sample_sd(b), b.size());
}

double HumanRecord::overall() const {
    return (ratings[0] + ratings[1] + ratings[2] + ratings[3]) / 4.0;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

HumanEvalSet parse_human_labels(std::istream& in) {
    static const std::vector<std::string> header = {"sample_id",          "annotator_id",       "approach",
                                                    "semantic_similarity", "textual_entailment", "expression_diversity",
                                                    "fluency"};
    HumanEvalSet set;
    std::string line;
    std::size_t row = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        if (!seen_header) {
            if (cells != header) throw IngestionError(row, "expected header " + join(header, ","));
            seen_header = true;
            continue;
        }
        if (cells.size() != header.size()) throw IngestionError(row, "expected 7 columns");
        HumanRecord r{cells[0], cells[1], cells[2], {}};
        if (r.sample_id.empty() || r.annotator_id.empty() || r.approach.empty())
            throw IngestionError(row, "empty identifier");
        for (std::size_t d = 0; d < 4; ++d) {
            const auto& cell = cells[3 + d];
            int v = 0;
            std::size_t used = 0;
            try {
                v = std::stoi(cell, &used);
            } catch (const std::logic_error&) {
                used = 0;
            }
            if (used == 0 || used != cell.size())
                throw IngestionError(row, std::string(kDimensions[d]) + " is not an integer: '" + cell + "'");
            if (v < 1 || v > 5)
                throw IngestionError(row, std::string(kDimensions[d]) + " rating " + cell + " is outside 1..5");
            r.ratings[d] = v;
        }
        set.records.push_back(std::move(r));
    }
    if (!seen_header) throw IngestionError(1, "missing header");
    return set;
}

HumanEvalSet load_human_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_human_labels(in);
}

double population_std(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

std::vector<HumanRow> human_report(const HumanEvalSet& set) {
    std::map<std::string, std::vector<const HumanRecord*>> by_approach;
    for (const auto& r : set.records) by_approach[r.approach].push_back(&r);
    std::vector<HumanRow> rows;
    auto rank = [](const std::string& a) {
        const auto& names = approach_names();
        return static_cast<std::size_t>(std::find(names.begin(), names.end(), a) - names.begin());
    };
    std::vector<std::string> keys;
    for (const auto& [k, v] : by_approach) keys.push_back(k);
    std::stable_sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
    for (const auto& k : keys) {
        const auto& recs = by_approach[k];
        HumanRow row{k, recs.size(), {}, {}};
        for (std::size_t d = 0; d < 4; ++d) {
            std::vector<double> xs;
            for (const auto* r : recs) xs.push_back(r->ratings[d]);
            row.dimensions[d] = {mean_of(xs), population_std(xs)};
        }
        std::vector<double> overall;
        for (const auto* r : recs) overall.push_back(r->overall());
        row.overall = {mean_of(overall), population_std(overall)};
        rows.push_back(row);
    }
    return rows;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("pearson: series differ in length");
    if (x.size() < 3) throw ValidationError("correlation needs at least 3 paired observations");
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("spearman: series differ in length");
    return pearson(average_ranks(x), average_ranks(y));
}

std::vector<Agreement> auto_human_agreement(const std::map<std::string, std::vector<metrics::ScoreBreakdown>>& scores,
                                            const HumanEvalSet& human) {
    std::map<std::pair<std::string, std::string>, std::pair<std::array<double, 5>, int>> ratings;
    for (const auto& r : human.records) {
        auto& [sum, count] = ratings[{r.approach, r.sample_id}];
        for (std::size_t d = 0; d < 4; ++d) sum[d] += r.ratings[d];
        sum[4] += r.overall();
        ++count;
    }
    std::array<std::vector<double>, 5> autos, humans;
    for (const auto& [key, agg] : ratings) {
        const auto it = scores.find(key.first);
        if (it == scores.end()) continue;
        const auto s = std::find_if(it->second.begin(), it->second.end(),
                                    [&](const metrics::ScoreBreakdown& b) { return b.sample_id == key.second; });
        if (s == it->second.end()) continue;
        const double a[5] = {s->semantic_similarity, s->textual_entailment, s->expression_diversity, s->fluency,
                             s->composite};
        for (std::size_t d = 0; d < 5; ++d) {
            autos[d].push_back(a[d]);
            humans[d].push_back(agg.first[d] / agg.second);
        }
    }
    std::vector<Agreement> out;
    for (std::size_t d = 0; d < 5; ++d) {
        Agreement ag{d < 4 ? kDimensions[d] : "overall", autos[d].size(), std::nullopt, std::nullopt};
        if (autos[d].size() >= 3) {
            ag.pearson = pearson(autos[d], humans[d]);
            ag.spearman = spearman(autos[d], humans[d]);
        }
        out.push_back(ag);
    }
    return out;
}

EvalReport build_report(const std::map<std::string, std::vector<metrics::ScoreBreakdown>>& scores,
                        const std::optional<HumanEvalSet>& human) {
    EvalReport report;
    const auto& names = approach_names();
    std::vector<std::string> keys;
    for (const auto& [k, v] : scores) keys.push_back(k);
    std::stable_sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
        return std::find(names.begin(), names.end(), a) < std::find(names.begin(), names.end(), b);
    });
    for (const auto& k : keys) report.rows.push_back(aggregate(k, scores.at(k)));

    if (report.rows.size() >= 2) {
        std::vector<const ReportRow*> ranked;
        for (const auto& r : report.rows) ranked.push_back(&r);
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const ReportRow* a, const ReportRow* b) { return a->overall > b->overall; });
        Significance sig{ranked[0]->approach, ranked[1]->approach, std::nullopt, ""};
        std::vector<double> a, b;
        for (const auto& s : scores.at(sig.best)) a.push_back(s.composite);
        for (const auto& s : scores.at(sig.second)) b.push_back(s.composite);
        try {
            sig.test = t_test(a, b);
            sig.note = "pooled-variance two-sample t test on per-sample composites";
        } catch (const ValidationError& e) {
            sig.note = e.what();
        }
        report.significance = sig;
    }
    if (human) {
        report.human = human_report(*human);
        report.agreement = auto_human_agreement(scores, *human);
    }
    return report;
}

namespace {

std::string fmt(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const EvalReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"approach", r.approach},
                        {"n", r.n},
                        {"semantic_similarity", r.semantic_similarity},
                        {"textual_entailment", r.textual_entailment},
                        {"expression_diversity", r.expression_diversity},
                        {"fluency", r.fluency},
                        {"overall", r.overall}});
    }
    json j = {{"rows", rows}};
    if (report.significance) {
        const auto& s = *report.significance;
        json sig = {{"best", s.best}, {"second", s.second}, {"note", s.note}};
        if (s.test) sig["t_test"] = {{"t", s.test->t}, {"df", s.test->df}, {"p", s.test->p}};
        else sig["t_test"] = nullptr;
        j["significance"] = sig;
    }
    if (!report.human.empty()) {
        json human = json::array();
        for (const auto& h : report.human) {
            json row = {{"approach", h.approach}, {"records", h.records}, {"std", "population"}};
            for (std::size_t d = 0; d < 4; ++d)
                row[kDimensions[d]] = {{"mean", h.dimensions[d].mean}, {"std", h.dimensions[d].std}};
            row["overall"] = {{"mean", h.overall.mean}, {"std", h.overall.std}};
            human.push_back(row);
        }
        j["human"] = human;
        json agreement = json::array();
        for (const auto& a : report.agreement) {
            agreement.push_back({{"dimension", a.dimension},
                                 {"pairs", a.pairs},
                                 {"pearson", optional_json(a.pearson)},
                                 {"spearman", optional_json(a.spearman)}});
        }
        j["agreement"] = agreement;
    }
    return j;
}

std::string report_csv(const EvalReport& report) {
    std::string out = "approach,n,semantic_similarity,textual_entailment,expression_diversity,fluency,overall\n";
    for (const auto& r : report.rows) {
        out += r.approach + "," + std::to_string(r.n) + "," + fmt(r.semantic_similarity, 6) + "," +
               fmt(r.textual_entailment, 6) + "," + fmt(r.expression_diversity, 6) + "," + fmt(r.fluency, 6) + "," +
               fmt(r.overall, 6) + "\n";
    }
    return out;
}

std::string report_markdown(const EvalReport& report) {
    std::string out =
        "| Approach | n | Semantic Similarity | Textual Entailment | Expression Diversity | Fluency | Overall Score |\n"
        "|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& r : report.rows) {
        out += "| " + r.approach + " | " + std::to_string(r.n) + " | " + fmt(r.semantic_similarity, 3) + " | " +
               fmt(r.textual_entailment, 3) + " | " + fmt(r.expression_diversity, 3) + " | " + fmt(r.fluency, 3) +
               " | " + fmt(r.overall, 3) + " |\n";
    }
    if (report.significance) {
        const auto& s = *report.significance;
        out += "\n" + s.best + " vs " + s.second + ": ";
        if (s.test) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "t(%.0f) = %.3f, p = %.3g", s.test->df, s.test->t, s.test->p);
            out += buf;
        } else {
            out += "not computed (" + s.note + ")";
        }
        out += "\n";
    }
    if (!report.human.empty()) {
        out += "\n| Approach | Semantic Similarity | Textual Entailment | Expression Diversity | Fluency | Overall |\n"
               "|---|---:|---:|---:|---:|---:|\n";
        for (const auto& h : report.human) {
            out += "| " + h.approach;
            for (const auto& d : h.dimensions) out += " | " + fmt(d.mean, 2) + " ± " + fmt(d.std, 2);
            out += " | " + fmt(h.overall.mean, 2) + " ± " + fmt(h.overall.std, 2) + " |\n";
        }
    }
    return out;
}

std::map<std::string, std::vector<metrics::ScoreBreakdown>> load_score_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("scores directory not found: " + dir.string());
    std::map<std::string, std::vector<metrics::ScoreBreakdown>> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".jsonl") continue;
        out[entry.path().stem().string()] = metrics::load_scores(entry.path());
    }
    if (out.empty()) throw Error("no score files in " + dir.string());
    return out;
}

}  // namespace ctxpara::evalharness
