#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ctxpara/nn.hpp"
#include "ctxpara/tokenizer.hpp"

namespace ctxpara {

struct TransformerConfig {
    int vocab_size = 0;
    int max_len = 128;
    int d_model = 32;
    int n_layers = 2;
    int n_heads = 2;
    int d_ff = 64;
};

nlohmann::json to_json(const TransformerConfig& c);
TransformerConfig transformer_config_from_json(const nlohmann::json& j);

/// Decoder-only pre-LayerNorm transformer with learned positions.
class TinyTransformer {
  public:
    struct Output {
        nn::Var hidden;  // T x d_model, after the final LayerNorm
        nn::Var logits;  // T x vocab_size
    };

    TinyTransformer(const TransformerConfig& config, std::uint64_t seed);

    TinyTransformer(const TinyTransformer& other);
    TinyTransformer& operator=(const TinyTransformer& other);
    TinyTransformer(TinyTransformer&&) noexcept = default;
    TinyTransformer& operator=(TinyTransformer&&) noexcept = default;

    Output forward(std::span<const TokenId> ids) const;

    const TransformerConfig& config() const { return config_; }
    std::vector<nn::Parameter>& parameters() { return params_; }
    const std::vector<nn::Parameter>& parameters() const { return params_; }

  private:
    struct Layer {
        nn::Var ln1_g, ln1_b;
        std::vector<nn::Var> wq, wk, wv;
        nn::Var wo, bo;
        nn::Var ln2_g, ln2_b;
        nn::Var w1, b1, w2, b2;
    };

    void register_all();

    TransformerConfig config_;
    nn::Var tok_emb_, pos_emb_;
    std::vector<Layer> layers_;
    nn::Var lnf_g_, lnf_b_, w_out_;
    std::vector<nn::Parameter> params_;
};

}  // namespace ctxpara
