#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctxpara/common.hpp"
#include "ctxpara/entailment.hpp"
#include "ctxpara/fluency.hpp"

namespace ctxpara::metrics {

enum class Smoothing { none, epsilon, add_one };

struct BleuConfig {
    int max_ngram_order = 4;
    Smoothing smoothing = Smoothing::epsilon;
    double epsilon = 1e-9;
    bool case_fold = true;
    std::string tokenization = "word-punct-v1";

    nlohmann::json to_json() const;
    static BleuConfig from_json(const nlohmann::json& j);
};

std::vector<std::string> bleu_tokens(std::string_view text, const BleuConfig& config);

/// Sentence BLEU. Orders run 1..min(N, |candidate|) so that short sentences
/// are not zeroed by orders they cannot contain. Smoothing:
///   none     zero matches at any order -> 0
///   epsilon  zero matches at order n -> epsilon / total_n
///   add_one  (m + 1) / (t + 1) for n >= 2
/// An empty candidate scores 0. Throws ValidationError on an empty reference.
double bleu(std::string_view candidate, std::string_view reference, const BleuConfig& config = {});

/// 1 - bleu(generated, actual).
double inverse_bleu(std::string_view generated, std::string_view actual, const BleuConfig& config = {});

class TokenEmbedder {
  public:
    virtual ~TokenEmbedder() = default;
    /// One vector per token. Throws ValidationError on empty text.
    virtual std::vector<Eigen::VectorXd> embed_tokens(std::string_view text) const = 0;
};

/// Context-independent embedder reading word rows out of a hashed encoder
/// table: the vector of a word is the table row of its unigram bucket.
class HashTokenEmbedder : public TokenEmbedder {
  public:
    explicit HashTokenEmbedder(const entailment::HashEncoder& encoder) : encoder_(&encoder) {}
    std::vector<Eigen::VectorXd> embed_tokens(std::string_view text) const override;

  private:
    const entailment::HashEncoder* encoder_;
};

/// Greedy-matching F1 over token cosines, clamped to [0, 1].
double semantic_similarity(const TokenEmbedder& embedder, std::string_view generated, std::string_view actual);

struct ScoreBreakdown {
    std::string sample_id;
    double semantic_similarity = 0.0;
    double textual_entailment = 0.0;
    double expression_diversity = 0.0;
    double fluency = 0.0;
    double composite = 0.0;
};

/// Equal-weight mean of the four components. Throws ValidationError naming
/// the first component that is non-finite or outside [0, 1].
ScoreBreakdown make_breakdown(std::string sample_id, double semantic_similarity, double textual_entailment,
                              double expression_diversity, double fluency);

/// Raised when a component model fails while scoring; names the component.
class ComponentError : public Error {
  public:
    ComponentError(std::string component, const std::string& what)
        : Error(component + ": " + what), component_(std::move(component)) {}
    const std::string& component() const { return component_; }

  private:
    std::string component_;
};

struct Components {
    const entailment::SentenceEncoder* entailment = nullptr;
    const fluency::AcceptabilityClassifier* fluency = nullptr;
    const TokenEmbedder* embedder = nullptr;
    BleuConfig bleu;
};

/// The evaluator R(X, Y, Y_hat). An empty generation scores 0 on every
/// component rather than raising, so a degenerate sample earns nothing
/// instead of aborting a batch.
class CompositeEvaluator {
  public:
    explicit CompositeEvaluator(Components components);

    ScoreBreakdown score(std::string_view context, std::string_view actual, std::string_view generated,
                         std::string sample_id = {}) const;
    const Components& components() const { return components_; }
    nlohmann::json describe() const;

  private:
    Components components_;
};

nlohmann::json to_json(const ScoreBreakdown& s);
ScoreBreakdown breakdown_from_json(const nlohmann::json& j);
std::string serialize_scores(const std::vector<ScoreBreakdown>& scores);
std::vector<ScoreBreakdown> load_scores(const std::filesystem::path& path);

}  // namespace ctxpara::metrics
