#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxpara/corpus.hpp"
#include "ctxpara/generator.hpp"

namespace ctxpara::generator {

struct SftConfig {
    int steps = 300;
    int batch_size = 8;
    double learning_rate = 3e-3;
    int eval_interval = 50;
    int response_budget = 32;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    std::string recipe = "context_control_sampling";

    nlohmann::json to_json() const;
    static SftConfig from_json(const nlohmann::json& j);
};

struct SftExample {
    PromptEncoding prompt;
    /// Response tokens followed by end-of-text.
    std::vector<TokenId> target;
};

/// Prompt and target for one sample. The response is cut to
/// response_budget - 1 tokens so the end-of-text marker always fits.
SftExample make_example(const corpus::Sample& sample, const PromptRecipe& recipe,
                        const std::vector<std::string>& noise_vocab, bool training, Rng& rng,
                        const LanguageModel& model, int response_budget);

/// Mean per-token negative log-likelihood of the targets.
double mean_nll(const LanguageModel& model, const std::vector<SftExample>& examples);

struct SftHistory {
    std::vector<std::pair<int, double>> train_loss;  // (step, batch loss)
    std::vector<std::pair<int, double>> val_loss;    // (step, mean val NLL), every eval_interval steps and at the end
};

/// Minimizes token-level NLL over response-region tokens only. Prompts are
/// rebuilt per sample and epoch from seeds derived from config.seed, so
/// noise and sampling recipes see fresh perturbations each epoch. Throws
/// TrainingError on a non-finite loss.
SftHistory sft_train(TransformerLM& model, const std::vector<corpus::Sample>& train,
                     const std::vector<corpus::Sample>& validation, const SftConfig& config,
                     const std::vector<std::string>& noise_vocab);

/// Vocabulary over prefixed contexts, responses and control words.
Vocabulary build_lm_vocabulary(const std::vector<corpus::Sample>& samples, std::size_t min_count,
                               std::size_t max_words);

}  // namespace ctxpara::generator
