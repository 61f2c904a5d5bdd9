#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxpara/generator.hpp"
#include "ctxpara/metrics.hpp"
#include "ctxpara/nn.hpp"

namespace ctxpara::rl {

struct RlConfig {
    int total_steps = 400;
    int batch_size = 8;
    int ppo_epochs = 4;
    int minibatches_per_batch = 1;
    double kl_beta = 0.1;
    double clip_epsilon = 0.2;
    double learning_rate = 1e-4;
    double value_coef = 0.5;
    double grad_clip = 1.0;
    bool adaptive_kl = false;
    double kl_target = 6.0;
    double kl_horizon = 10000.0;
    /// Training aborts when approx_kl stays above this for 10 consecutive steps.
    double kl_ceiling = 20.0;
    int response_budget = 32;
    generator::DecodeConfig decode{generator::DecodeStrategy::top_p, 1.0, 1.0, 32, 0};
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static RlConfig from_json(const nlohmann::json& j);
    /// Throws ValidationError listing every violated constraint.
    void validate() const;
};

/// r - beta * (logprob_policy - logprob_ref). Throws ValidationError on
/// non-finite input or negative beta.
double kl_penalized_reward(double r, double logprob_policy, double logprob_ref, double beta);

/// A prompt together with what the reward needs to know about it.
struct RlPrompt {
    std::string id;
    generator::PromptEncoding prompt;
    std::string context;  // flattened context (X)
    std::string actual;   // reference response (Y)
};

struct Reward {
    double value = 0.0;
    std::optional<metrics::ScoreBreakdown> breakdown;
};

class RewardFunction {
  public:
    virtual ~RewardFunction() = default;
    virtual Reward operator()(const RlPrompt& prompt, const generator::GenerationResult& generation) const = 0;
};

/// The composite evaluator as a reward.
class CompositeReward : public RewardFunction {
  public:
    explicit CompositeReward(const metrics::CompositeEvaluator& evaluator) : evaluator_(&evaluator) {}
    Reward operator()(const RlPrompt& prompt, const generator::GenerationResult& generation) const override;

  private:
    const metrics::CompositeEvaluator* evaluator_;
};

struct Rollout {
    std::size_t prompt_index = 0;
    generator::GenerationResult generation;
    std::vector<double> policy_logprobs;
    std::vector<double> ref_logprobs;
    double raw_reward = 0.0;
    double shaped_reward = 0.0;
    std::optional<metrics::ScoreBreakdown> breakdown;
};

struct RolloutBatch {
    std::vector<Rollout> rollouts;
    double mean_raw_reward() const;
    double mean_shaped_reward() const;
    /// Mean over rollouts of the sequence log-ratio log pi - log P.
    double mean_log_ratio() const;
};

/// Samples one generation per prompt and scores it. Any reward failure
/// propagates as an error for the whole batch.
RolloutBatch collect_rollouts(const generator::LanguageModel& policy, const generator::LanguageModel& reference,
                              const std::vector<RlPrompt>& prompts, const std::vector<std::size_t>& indices,
                              const RewardFunction& reward, const generator::DecodeConfig& decode, double kl_beta,
                              Rng& rng);

/// Scalar value baseline read off the policy's final hidden states.
class ValueHead {
  public:
    explicit ValueHead(int d_model);
    nn::Var values(const nn::Var& hidden) const;
    std::vector<nn::Parameter>& parameters() { return params_; }

  private:
    std::vector<nn::Parameter> params_;
};

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double approx_kl = 0.0;      // 0.5 * mean (new - old)^2 over all tokens and passes
    double clip_fraction = 0.0;  // over all tokens and passes
    std::vector<double> clip_fraction_per_epoch;
};

/// Whitened returns: (x - mean) / std over the batch; all zeros when std is
/// below 1e-8.
std::vector<double> whiten(const std::vector<double>& values);

/// Optimizer state shared across updates of one run.
struct PpoState {
    PpoState(generator::TransformerLM& policy, const RlConfig& config);
    generator::TransformerLM* policy;
    ValueHead value_head;
    std::vector<nn::Parameter> params;  // policy then value head
    nn::Adam adam;
};

UpdateStats ppo_update(PpoState& state, const std::vector<RlPrompt>& prompts, const RolloutBatch& batch,
                       const RlConfig& config, Rng& rng, int step = 0);

struct CurveRow {
    int step = 0;
    double mean_raw_reward = 0.0;
    double mean_shaped_reward = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double kl_beta = 0.0;
};

std::string curve_csv(const std::vector<CurveRow>& rows);

struct RlResult {
    std::vector<CurveRow> curve;
    std::uint64_t reference_hash_start = 0;
    std::uint64_t reference_hash_end = 0;
    double final_kl_beta = 0.0;
};

/// Runs total_steps of collect -> ppo_update. The reference model is only
/// read; its parameter hash is checked after every step.
RlResult train_rl(generator::TransformerLM& policy, const generator::TransformerLM& reference,
                  const std::vector<RlPrompt>& prompts, const RewardFunction& reward, const RlConfig& config,
                  const std::function<void(const CurveRow&)>& on_step = {});

/// Mean reward of `samples_per_prompt` generations per prompt under a fixed seed.
double mean_reward(const generator::LanguageModel& model, const std::vector<RlPrompt>& prompts,
                   const RewardFunction& reward, const generator::DecodeConfig& decode, int samples_per_prompt,
                   std::uint64_t seed);

/// RL prompts for samples under the given recipe (evaluation-time prompts).
std::vector<RlPrompt> make_prompts(const std::vector<corpus::Sample>& samples, const generator::LanguageModel& model,
                                   const generator::PromptRecipe& recipe, int response_budget, std::uint64_t seed);

}  // namespace ctxpara::rl
