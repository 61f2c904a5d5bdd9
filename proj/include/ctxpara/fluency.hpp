#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctxpara/common.hpp"

namespace ctxpara::fluency {

enum class Domain { in_domain, out_of_domain, unknown };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view s);

struct AcceptabilityExample {
    std::string text;
    bool acceptable = false;
    Domain domain = Domain::unknown;
};

/// CoLA TSV rows: source, label (0/1), original annotation, sentence.
/// Throws IngestionError naming the 1-based row.
std::vector<AcceptabilityExample> parse_cola_tsv(std::istream& in, Domain domain = Domain::unknown);
std::vector<AcceptabilityExample> load_cola_tsv(const std::filesystem::path& path, Domain domain = Domain::unknown);

class AcceptabilityClassifier {
  public:
    virtual ~AcceptabilityClassifier() = default;
    /// Probability of the acceptable class, in [0, 1]. Throws ValidationError on empty text.
    virtual double probability(std::string_view text) const = 0;
};

struct FluencyConfig {
    int buckets = 1 << 14;
    bool bigrams = true;
    int steps = 300;
    double learning_rate = 0.1;
    double l2 = 1e-4;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static FluencyConfig from_json(const nlohmann::json& j);
};

/// sigmoid with saturation at +-inf.
double sigmoid(double logit);

/// Logistic regression over hashed bag-of-n-gram features (a bias bucket,
/// lowercase unigrams with punctuation kept, optionally bigrams with
/// sentence boundary markers). Feature values are counts scaled by
/// 1/sqrt(number of features).
class LogisticFluencyModel : public AcceptabilityClassifier {
  public:
    explicit LogisticFluencyModel(const FluencyConfig& config);

    double probability(std::string_view text) const override;
    double logit(std::string_view text) const;

    struct Feature {
        int bucket;
        double value;
    };
    std::vector<Feature> features(std::string_view text) const;

    const FluencyConfig& config() const { return config_; }
    Eigen::VectorXd& weights() { return weights_; }
    const Eigen::VectorXd& weights() const { return weights_; }

    void save(const std::filesystem::path& dir, const nlohmann::json& extra = {}) const;
    static LogisticFluencyModel load(const std::filesystem::path& dir);

  private:
    FluencyConfig config_;
    Eigen::VectorXd weights_;
};

struct FluencyTrainResult {
    std::vector<double> loss_curve;  // mean log loss before each step
};

/// Full-batch Adam on mean log loss plus l2 * ||w||^2 / 2. Zero-initialized,
/// so 0 steps gives probability 0.5 everywhere. Throws ValidationError when
/// the training data lacks either class and TrainingError on a non-finite loss.
FluencyTrainResult train_fluency(LogisticFluencyModel& model, const std::vector<AcceptabilityExample>& train);

/// Matthews correlation; 0 when any marginal is empty.
double mcc(const std::vector<bool>& predictions, const std::vector<bool>& labels);

struct FluencyEval {
    double mcc = 0.0;
    double accuracy = 0.0;
    std::size_t n = 0;
};

/// Predictions use threshold 0.5 (probability >= 0.5 counts as acceptable).
FluencyEval evaluate_fluency(const AcceptabilityClassifier& model, const std::vector<AcceptabilityExample>& data);

}  // namespace ctxpara::fluency
