#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctxpara/common.hpp"
#include "ctxpara/corpus.hpp"

namespace ctxpara::entailment {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Pooling { mean, first_token };

class SentenceEncoder {
  public:
    virtual ~SentenceEncoder() = default;
    virtual int embed_dim() const = 0;
    /// Deterministic for fixed parameters. Throws ValidationError on empty text.
    virtual Vector embed(std::string_view text) const = 0;
};

struct EncoderConfig {
    int dim = 32;
    int buckets = 4096;
    bool bigrams = true;
    Pooling pooling = Pooling::mean;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

/// Hashed n-gram bag encoder: every text maps to a list of hash buckets
/// (a bias bucket, lowercase word unigrams and optionally bigrams), and the
/// embedding pools the learned rows of those buckets.
class HashEncoder : public SentenceEncoder {
  public:
    explicit HashEncoder(const EncoderConfig& config);

    int embed_dim() const override { return config_.dim; }
    Vector embed(std::string_view text) const override;

    /// Bucket ids of the text's features in order: bias, unigrams, bigrams.
    std::vector<int> features(std::string_view text) const;
    /// Bucket for one feature string ("u:word", "b:w1 w2" or "<bias>").
    int bucket(std::string_view feature) const;

    const EncoderConfig& config() const { return config_; }
    Matrix& table() { return table_; }
    const Matrix& table() const { return table_; }

    void save(const std::filesystem::path& dir, const nlohmann::json& extra = {}) const;
    static HashEncoder load(const std::filesystem::path& dir);

    /// Accumulates d(loss)/d(table) given d(loss)/d(embedding) of `text`.
    void backprop(std::string_view text, const Vector& grad_embedding, Matrix& grad_table) const;

  private:
    EncoderConfig config_;
    Matrix table_;
};

/// Multiple negatives ranking loss over a batch of B positive pairs, with the
/// other B-1 responses of the batch as negatives:
///   (1/B) sum_i -log softmax_j(scale * cos(c_i, r_j))_i
/// Rows are L2-normalized internally. When grad pointers are given, they
/// receive the gradient with respect to the raw (unnormalized) rows.
/// Throws ValidationError when B < 2.
double mnr_loss(const Matrix& contexts, const Matrix& responses, double scale, Matrix* grad_contexts = nullptr,
                Matrix* grad_responses = nullptr);

/// (1 + cos(embed(context), embed(response))) / 2. Zero-norm embeddings count as cos 0.
double entailment_score(const SentenceEncoder& encoder, std::string_view context, std::string_view response);
double cosine(const Vector& a, const Vector& b);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double learning_rate = 5e-3;
    double scale = 20.0;
    std::uint64_t seed = 0;
    EncoderConfig encoder;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
    std::vector<double> loss_curve;  // one entry per optimizer step
};

/// Trains in place on shuffled batches of positive pairs. Needs at least
/// 2 * batch_size pairs. A trailing partial batch with fewer than 2 pairs is
/// skipped. Throws TrainingError on a non-finite loss.
TrainResult train_entailment(HashEncoder& encoder, const std::vector<corpus::EntailmentPair>& pairs,
                             const TrainConfig& config);

/// Fraction of pairs whose own response is the top-scoring response among
/// the pairs of its batch (batches taken in input order).
double in_batch_accuracy(const SentenceEncoder& encoder, const std::vector<corpus::EntailmentPair>& pairs,
                         int batch_size);

struct NucCase {
    std::string context;
    std::string response;
    std::vector<std::string> distractors;  // exactly 9
};

struct NucMetrics {
    double r_at_1 = 0.0;
    double r_at_2 = 0.0;
    double mrr = 0.0;
    std::size_t cases = 0;
};

using PairScorer = std::function<double(const std::string& context, const std::string& response)>;

/// Ranks the 10 candidates by score, descending. Candidates are listed with
/// the distractors first and the true response last, and ties keep that
/// order, so a tie never favours the true response.
NucMetrics evaluate_nuc(const PairScorer& scorer, const std::vector<NucCase>& cases);
NucMetrics evaluate_nuc(const SentenceEncoder& encoder, const std::vector<NucCase>& cases);

/// One case per pair; distractors are drawn uniformly from the other pairs'
/// responses, skipping strings equal to the true response or already drawn.
std::vector<NucCase> build_nuc_cases(const std::vector<corpus::EntailmentPair>& pairs, std::uint64_t seed,
                                     std::size_t n_distractors = 9);

std::vector<NucCase> load_nuc_cases(const std::filesystem::path& path);
void save_nuc_cases(const std::filesystem::path& path, const std::vector<NucCase>& cases);

}  // namespace ctxpara::entailment
