#pragma once

// Synthetic bandit for PPO checks: prompts are short random word sequences
// and the reward is 1 iff a designated token appears in the generation.

#include <algorithm>
#include <string>
#include <vector>

#include "ctxpara/generator.hpp"
#include "ctxpara/rl.hpp"

namespace toy {

inline ctxpara::Vocabulary bandit_vocab(int words = 16) {
    std::vector<std::vector<std::string>> docs(1);
    for (int i = 0; i < words; ++i) docs[0].push_back("w" + std::to_string(i));
    return ctxpara::Vocabulary::build(docs, 1, static_cast<std::size_t>(words));
}

inline ctxpara::TransformerConfig bandit_config(int vocab_size) {
    ctxpara::TransformerConfig c;
    c.vocab_size = vocab_size;
    c.max_len = 16;
    c.d_model = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 32;
    return c;
}

class TokenReward : public ctxpara::rl::RewardFunction {
  public:
    explicit TokenReward(ctxpara::TokenId target) : target_(target) {}
    ctxpara::rl::Reward operator()(const ctxpara::rl::RlPrompt&,
                                   const ctxpara::generator::GenerationResult& g) const override {
        const bool hit = std::find(g.token_ids.begin(), g.token_ids.end(), target_) != g.token_ids.end();
        return {hit ? 1.0 : 0.0, std::nullopt};
    }

  private:
    ctxpara::TokenId target_;
};

/// Prompts of three random words; distinct seeds give disjoint-looking sets.
inline std::vector<ctxpara::rl::RlPrompt> bandit_prompts(const ctxpara::generator::LanguageModel& model, int n,
                                                         int words, int budget, std::uint64_t seed) {
    ctxpara::Rng rng(seed);
    std::vector<ctxpara::rl::RlPrompt> out;
    for (int i = 0; i < n; ++i) {
        std::string text;
        for (int k = 0; k < 3; ++k) text += (k ? " w" : "w") + std::to_string(rng.uniform_index(words));
        auto enc = ctxpara::generator::assemble_prompt({text}, {}, model.tokenizer(), model.max_sequence_length(),
                                                      budget);
        out.push_back({"p" + std::to_string(i), enc, text, text});
    }
    return out;
}

}  // namespace toy
