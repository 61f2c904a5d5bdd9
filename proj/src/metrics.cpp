#include "ctxpara/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ctxpara::metrics {

using nlohmann::json;

namespace {

std::string_view smoothing_name(Smoothing s) {
    switch (s) {
        case Smoothing::none: return "none";
        case Smoothing::epsilon: return "epsilon";
        default: return "add_one";
    }
}

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks, int n) {
    std::map<std::vector<std::string>, int> out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
        ++out[std::vector<std::string>(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i) + n)];
    return out;
}

}  // namespace

json BleuConfig::to_json() const {
    return {{"max_ngram_order", max_ngram_order},
            {"smoothing", smoothing_name(smoothing)},
            {"epsilon", epsilon},
            {"case_fold", case_fold},
            {"tokenization", tokenization}};
}

BleuConfig BleuConfig::from_json(const json& j) {
    BleuConfig c;
    c.max_ngram_order = j.value("max_ngram_order", c.max_ngram_order);
    const auto s = j.value("smoothing", std::string("epsilon"));
    if (s == "none") c.smoothing = Smoothing::none;
    else if (s == "epsilon") c.smoothing = Smoothing::epsilon;
    else if (s == "add_one") c.smoothing = Smoothing::add_one;
    else throw ValidationError("unknown BLEU smoothing '" + s + "'");
    c.epsilon = j.value("epsilon", c.epsilon);
    c.case_fold = j.value("case_fold", c.case_fold);
    c.tokenization = j.value("tokenization", c.tokenization);
    if (c.max_ngram_order < 1) throw ValidationError("max_ngram_order must be >= 1");
    if (c.tokenization != "word-punct-v1") throw ValidationError("unknown BLEU tokenization '" + c.tokenization + "'");
    return c;
}

std::vector<std::string> bleu_tokens(std::string_view text, const BleuConfig& config) {
    auto toks = word_punct_split(text);
    if (config.case_fold) {
        for (auto& t : toks) t = ascii_lower(t);
    }
    return toks;
}

double bleu(std::string_view candidate, std::string_view reference, const BleuConfig& config) {
    if (config.max_ngram_order < 1) throw ValidationError("max_ngram_order must be >= 1");
    const auto ref = bleu_tokens(reference, config);
    if (ref.empty()) throw ValidationError("bleu: reference is empty");
    const auto cand = bleu_tokens(candidate, config);
    if (cand.empty()) return 0.0;

    const int order = std::min<int>(config.max_ngram_order, static_cast<int>(cand.size()));
    double log_sum = 0.0;
    for (int n = 1; n <= order; ++n) {
        const auto c = ngram_counts(cand, n);
        const auto r = ngram_counts(ref, n);
        double matches = 0.0;
        for (const auto& [g, k] : c) {
            const auto it = r.find(g);
            if (it != r.end()) matches += std::min(k, it->second);
        }
        const double total = static_cast<double>(cand.size() - static_cast<std::size_t>(n) + 1);
        double p;
        switch (config.smoothing) {
            case Smoothing::none:
                if (matches == 0.0) return 0.0;
                p = matches / total;
                break;
            case Smoothing::epsilon:
                p = (matches == 0.0 ? config.epsilon : matches) / total;
                break;
            default:
                if (n == 1) {
                    if (matches == 0.0) return 0.0;
                    p = matches / total;
                } else {
                    p = (matches + 1.0) / (total + 1.0);
                }
        }
        log_sum += std::log(p);
    }
    const double c_len = static_cast<double>(cand.size());
    const double r_len = static_cast<double>(ref.size());
    const double bp = c_len > r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
    return std::clamp(bp * std::exp(log_sum / order), 0.0, 1.0);
}

double inverse_bleu(std::string_view generated, std::string_view actual, const BleuConfig& config) {
    return 1.0 - bleu(generated, actual, config);
}

std::vector<Eigen::VectorXd> HashTokenEmbedder::embed_tokens(std::string_view text) const {
    if (trim(text).empty()) throw ValidationError("embed_tokens: text is empty");
    std::vector<std::string> words, all;
    for (auto& t : word_punct_split(text)) {
        all.push_back(ascii_lower(t));
        if (!is_punctuation_only(t)) words.push_back(all.back());
    }
    if (words.empty()) words = all;
    std::vector<Eigen::VectorXd> out;
    for (const auto& w : words) out.push_back(encoder_->table().row(encoder_->bucket("u:" + w)).transpose());
    return out;
}

double semantic_similarity(const TokenEmbedder& embedder, std::string_view generated, std::string_view actual) {
    if (trim(generated).empty() || trim(actual).empty()) throw ValidationError("semantic_similarity: empty text");
    const auto g = embedder.embed_tokens(generated);
    const auto a = embedder.embed_tokens(actual);
    Eigen::MatrixXd sim(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entailment::cosine(g[i], a[j]);
    const double precision = sim.rowwise().maxCoeff().mean();
    const double recall = sim.colwise().maxCoeff().mean();
    if (precision + recall <= 0.0) return 0.0;
    return std::clamp(2.0 * precision * recall / (precision + recall), 0.0, 1.0);
}

ScoreBreakdown make_breakdown(std::string sample_id, double semantic_similarity, double textual_entailment,
                              double expression_diversity, double fluency) {
    const std::pair<const char*, double> parts[] = {{"semantic_similarity", semantic_similarity},
                                                    {"textual_entailment", textual_entailment},
                                                    {"expression_diversity", expression_diversity},
                                                    {"fluency", fluency}};
    for (const auto& [name, v] : parts) {
        if (!is_finite(v) || v < 0.0 || v > 1.0)
            throw ValidationError(std::string(name) + " is outside [0, 1]: " + std::to_string(v));
    }
    ScoreBreakdown s{std::move(sample_id), semantic_similarity, textual_entailment, expression_diversity, fluency, 0.0};
    s.composite = (semantic_similarity + textual_entailment + expression_diversity + fluency) / 4.0;
    return s;
}

CompositeEvaluator::CompositeEvaluator(Components components) : components_(components) {
    if (!components_.entailment) throw ComponentError("textual_entailment", "encoder not loaded");
    if (!components_.fluency) throw ComponentError("fluency", "classifier not loaded");
    if (!components_.embedder) throw ComponentError("semantic_similarity", "token embedder not loaded");
    if (components_.bleu.max_ngram_order < 1) throw ComponentError("expression_diversity", "bad BLEU config");
}

namespace {

template <class F>
double component(const char* name, F&& f) {
    double v;
    try {
        v = f();
    } catch (const std::exception& e) {
        throw ComponentError(name, e.what());
    }
    if (!is_finite(v) || v < -1e-12 || v > 1.0 + 1e-12) throw ComponentError(name, "value outside [0, 1]");
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace

ScoreBreakdown CompositeEvaluator::score(std::string_view context, std::string_view actual,
                                         std::string_view generated, std::string sample_id) const {
    if (trim(generated).empty()) return make_breakdown(std::move(sample_id), 0.0, 0.0, 0.0, 0.0);
    const auto& c = components_;
    const double sim =
        component("semantic_similarity", [&] { return semantic_similarity(*c.embedder, generated, actual); });
    const double ent =
        component("textual_entailment", [&] { return entailment::entailment_score(*c.entailment, context, generated); });
    const double div = component("expression_diversity", [&] { return inverse_bleu(generated, actual, c.bleu); });
    const double flu = component("fluency", [&] { return c.fluency->probability(generated); });
    return make_breakdown(std::move(sample_id), sim, ent, div, flu);
}

json CompositeEvaluator::describe() const {
    return {{"weights", {0.25, 0.25, 0.25, 0.25}},
            {"semantic_similarity", {{"method", "greedy-match-f1"}, {"idf", false}, {"rescaled", false},
                                     {"negative_values", "clamped-to-0"}}},
            {"expression_diversity", {{"method", "1-sentence-bleu"}, {"bleu", components_.bleu.to_json()}}},
            {"textual_entailment", {{"method", "(1+cos)/2"}}},
            {"fluency", {{"method", "p(acceptable)"}}},
            {"empty_generation", "all-components-0"}};
}

json to_json(const ScoreBreakdown& s) {
    return {{"sample_id", s.sample_id},
            {"semantic_similarity", s.semantic_similarity},
            {"textual_entailment", s.textual_entailment},
            {"expression_diversity", s.expression_diversity},
            {"fluency", s.fluency},
            {"composite", s.composite}};
}

ScoreBreakdown breakdown_from_json(const json& j) {
    auto s = make_breakdown(j.at("sample_id").get<std::string>(), j.at("semantic_similarity").get<double>(),
                            j.at("textual_entailment").get<double>(), j.at("expression_diversity").get<double>(),
                            j.at("fluency").get<double>());
    const double stored = j.at("composite").get<double>();
    if (std::abs(stored - s.composite) > 1e-9) throw ValidationError("composite is not the mean of its components");
    s.composite = stored;
    return s;
}

std::string serialize_scores(const std::vector<ScoreBreakdown>& scores) {
    std::string out;
    for (const auto& s : scores) out += to_json(s).dump() + "\n";
    return out;
}

std::vector<ScoreBreakdown> load_scores(const std::filesystem::path& path) {
    std::vector<ScoreBreakdown> out;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            out.push_back(breakdown_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw IngestionError(n, path.string() + ": " + e.what());
        } catch (const ValidationError& e) {
            throw IngestionError(n, path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace ctxpara::metrics
