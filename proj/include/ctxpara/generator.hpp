#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctxpara/common.hpp"
#include "ctxpara/corpus.hpp"
#include "ctxpara/nn.hpp"
#include "ctxpara/tokenizer.hpp"
#include "ctxpara/transformer.hpp"

namespace ctxpara::generator {

/// Autoregressive language model contract. Implementations must be safe for
/// concurrent const calls.
class LanguageModel {
  public:
    virtual ~LanguageModel() = default;
    virtual const WordTokenizer& tokenizer() const = 0;
    virtual int max_sequence_length() const = 0;
    /// Row t holds log P(next token | ids[0..t]); shape ids.size() x vocab.
    virtual nn::Matrix next_token_logprobs(std::span<const TokenId> ids) const = 0;

    std::size_t vocab_size() const { return tokenizer().vocab().size(); }
};

/// The built-in trainable backend.
class TransformerLM : public LanguageModel {
  public:
    TransformerLM(WordTokenizer tokenizer, const TransformerConfig& config, std::uint64_t seed);

    const WordTokenizer& tokenizer() const override { return tokenizer_; }
    int max_sequence_length() const override { return net_.config().max_len; }
    nn::Matrix next_token_logprobs(std::span<const TokenId> ids) const override;

    TinyTransformer& network() { return net_; }
    const TinyTransformer& network() const { return net_; }
    std::uint64_t init_seed() const { return seed_; }

  private:
    WordTokenizer tokenizer_;
    TinyTransformer net_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Checkpoints: a directory holding weights.bin, vocab.txt and manifest.json.

void save_checkpoint(const std::filesystem::path& dir, const TransformerLM& model, const nlohmann::json& extra);
std::unique_ptr<TransformerLM> load_checkpoint(const std::filesystem::path& dir);
nlohmann::json read_manifest(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Prompts.

/// Literal separator strings; each must be a special vocabulary entry.
struct SeparatorScheme {
    std::string context_control{special::kContextControl};
    std::string control_word{special::kControlWord};
    std::string response{special::kResponse};
};

struct PromptEncoding {
    std::vector<TokenId> token_ids;
    /// Index where the response region begins (one past the response separator).
    std::size_t boundary = 0;
};

/// Prompt text layout:
///   <turn_1> ... <turn_n> CTX_CTRL w_1 CW w_2 ... CW w_k RESP
/// With no control words the control region and its separator are omitted.
std::string prompt_text(const std::vector<std::string>& context, const std::vector<std::string>& controls,
                        const SeparatorScheme& scheme = {});

/// Throws LengthError when prompt + response_budget exceeds max_sequence_length.
PromptEncoding assemble_prompt(const std::vector<std::string>& context, const std::vector<std::string>& controls,
                               const WordTokenizer& tokenizer, int max_sequence_length, int response_budget,
                               const SeparatorScheme& scheme = {});

/// Which inputs a prompt carries and how control words are perturbed.
struct PromptRecipe {
    bool use_context = true;
    bool use_controls = true;
    /// Fraction of control words swapped for vocabulary draws during training.
    double noise_fraction = 0.0;
    /// Draw a per-sample keep rate from [sample_rate_min, sample_rate_max] during training.
    bool sample_controls = false;
    double sample_rate_min = 0.5;
    double sample_rate_max = 1.0;

    nlohmann::json to_json() const;
};

/// Recipe for an approach name (pretrained, only_context, only_control_words,
/// context_and_control, context_control_noise, context_control_sampling,
/// rl_finetuned). Throws ValidationError for unknown names.
PromptRecipe recipe_for(std::string_view approach);

struct PromptInputs {
    std::vector<std::string> context;
    std::vector<std::string> controls;
};

/// Applies the recipe to a sample. Noise and sampling only act when
/// `training` is set; control words are always shuffled.
PromptInputs prompt_inputs(const corpus::Sample& sample, const PromptRecipe& recipe,
                           const std::vector<std::string>& noise_vocab, bool training, Rng& rng);

// ---------------------------------------------------------------------------
// Scoring and decoding.

/// Sum over t of log P(target_t | prompt, target_<t). Throws LengthError when
/// prompt + target does not fit the model.
double sequence_logprob(const LanguageModel& model, const PromptEncoding& prompt, std::span<const TokenId> target);

/// Per-token log-probabilities of `target` given the prompt.
std::vector<double> token_logprobs(const LanguageModel& model, const PromptEncoding& prompt,
                                   std::span<const TokenId> target);

enum class DecodeStrategy { greedy, top_p };

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::top_p;
    double temperature = 1.0;
    double top_p = 0.9;
    int max_new_tokens = 32;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static DecodeConfig from_json(const nlohmann::json& j);
    /// Parses "greedy" or comma separated key=value pairs such as
    /// "top_p=0.9,temperature=0.8,max_new_tokens=24".
    static DecodeConfig parse(std::string_view spec);
};

struct GenerationResult {
    std::string text;
    std::vector<TokenId> token_ids;
    /// Log-probabilities under the unmodified model distribution, so their sum
    /// equals sequence_logprob of the generated ids.
    std::vector<double> per_token_logprobs;
    DecodeConfig decode_config;
    bool empty = false;

    double logprob() const;
};

/// Decodes from the response position until end-of-text or max_new_tokens
/// (or the model's length limit).
GenerationResult generate(const LanguageModel& model, const PromptEncoding& prompt, const DecodeConfig& decode,
                          Rng& rng);

}  // namespace ctxpara::generator
