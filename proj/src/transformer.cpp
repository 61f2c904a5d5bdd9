#include "ctxpara/transformer.hpp"

#include <cmath>

namespace ctxpara {

using nn::Matrix;
using nn::Var;

nlohmann::json to_json(const TransformerConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"max_len", c.max_len}, {"d_model", c.d_model},
            {"n_layers", c.n_layers},     {"n_heads", c.n_heads}, {"d_ff", c.d_ff}};
}

TransformerConfig transformer_config_from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_len = j.value("max_len", c.max_len);
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    return c;
}

namespace {

Var random_param(Rng& rng, int rows, int cols, double stddev) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal() * stddev;
    return nn::parameter(std::move(m));
}

Var constant_param(int rows, int cols, double value) { return nn::parameter(Matrix::Constant(rows, cols, value)); }

}  // namespace

TinyTransformer::TinyTransformer(const TransformerConfig& config, std::uint64_t seed) : config_(config) {
    if (config.vocab_size <= 0 || config.max_len <= 0 || config.d_model <= 0 || config.n_layers < 0 ||
        config.n_heads <= 0 || config.d_model % config.n_heads != 0 || config.d_ff <= 0)
        throw ValidationError("invalid transformer configuration");
    Rng rng(seed);
    const int d = config.d_model;
    const int dh = d / config.n_heads;
    const double lin = 1.0 / std::sqrt(static_cast<double>(d));
    tok_emb_ = random_param(rng, config.vocab_size, d, 0.5);
    pos_emb_ = random_param(rng, config.max_len, d, 0.1);
    for (int l = 0; l < config.n_layers; ++l) {
        Layer layer;
        layer.ln1_g = constant_param(1, d, 1.0);
        layer.ln1_b = constant_param(1, d, 0.0);
        for (int h = 0; h < config.n_heads; ++h) {
            layer.wq.push_back(random_param(rng, d, dh, lin));
            layer.wk.push_back(random_param(rng, d, dh, lin));
            layer.wv.push_back(random_param(rng, d, dh, lin));
        }
        layer.wo = random_param(rng, d, d, lin / std::sqrt(2.0 * config.n_layers));
        layer.bo = constant_param(1, d, 0.0);
        layer.ln2_g = constant_param(1, d, 1.0);
        layer.ln2_b = constant_param(1, d, 0.0);
        layer.w1 = random_param(rng, d, config.d_ff, lin);
        layer.b1 = constant_param(1, config.d_ff, 0.0);
        layer.w2 = random_param(rng, config.d_ff, d, 1.0 / std::sqrt(static_cast<double>(config.d_ff) * 2.0 * config.n_layers));
        layer.b2 = constant_param(1, d, 0.0);
        layers_.push_back(std::move(layer));
    }
    lnf_g_ = constant_param(1, d, 1.0);
    lnf_b_ = constant_param(1, d, 0.0);
    w_out_ = random_param(rng, d, config.vocab_size, lin);
    register_all();
}

void TinyTransformer::register_all() {
    params_.clear();
    params_.push_back({"tok_emb", tok_emb_});
    params_.push_back({"pos_emb", pos_emb_});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        auto& L = layers_[l];
        params_.push_back({p + "ln1_g", L.ln1_g});
        params_.push_back({p + "ln1_b", L.ln1_b});
        for (std::size_t h = 0; h < L.wq.size(); ++h) {
            params_.push_back({p + "wq" + std::to_string(h), L.wq[h]});
            params_.push_back({p + "wk" + std::to_string(h), L.wk[h]});
            params_.push_back({p + "wv" + std::to_string(h), L.wv[h]});
        }
        params_.push_back({p + "wo", L.wo});
        params_.push_back({p + "bo", L.bo});
        params_.push_back({p + "ln2_g", L.ln2_g});
        params_.push_back({p + "ln2_b", L.ln2_b});
        params_.push_back({p + "w1", L.w1});
        params_.push_back({p + "b1", L.b1});
        params_.push_back({p + "w2", L.w2});
        params_.push_back({p + "b2", L.b2});
    }
    params_.push_back({"lnf_g", lnf_g_});
    params_.push_back({"lnf_b", lnf_b_});
    params_.push_back({"w_out", w_out_});
}

TinyTransformer::TinyTransformer(const TinyTransformer& other) : config_(other.config_) {
    auto clone = [](const Var& v) { return nn::parameter(v->value); };
    tok_emb_ = clone(other.tok_emb_);
    pos_emb_ = clone(other.pos_emb_);
    for (const auto& o : other.layers_) {
        Layer L;
        L.ln1_g = clone(o.ln1_g);
        L.ln1_b = clone(o.ln1_b);
        for (std::size_t h = 0; h < o.wq.size(); ++h) {
            L.wq.push_back(clone(o.wq[h]));
            L.wk.push_back(clone(o.wk[h]));
            L.wv.push_back(clone(o.wv[h]));
        }
        L.wo = clone(o.wo);
        L.bo = clone(o.bo);
        L.ln2_g = clone(o.ln2_g);
        L.ln2_b = clone(o.ln2_b);
        L.w1 = clone(o.w1);
        L.b1 = clone(o.b1);
        L.w2 = clone(o.w2);
        L.b2 = clone(o.b2);
        layers_.push_back(std::move(L));
    }
    lnf_g_ = clone(other.lnf_g_);
    lnf_b_ = clone(other.lnf_b_);
    w_out_ = clone(other.w_out_);
    register_all();
}

TinyTransformer& TinyTransformer::operator=(const TinyTransformer& other) {
    if (this != &other) *this = TinyTransformer(other);
    return *this;
}

TinyTransformer::Output TinyTransformer::forward(std::span<const TokenId> ids) const {
    const int T = static_cast<int>(ids.size());
    if (T == 0) throw Error("forward: empty input");
    if (T > config_.max_len)
        throw LengthError("sequence of " + std::to_string(T) + " tokens exceeds max_len " + std::to_string(config_.max_len));
    std::vector<int> tok(ids.begin(), ids.end());
    std::vector<int> pos(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) pos[static_cast<std::size_t>(t)] = t;

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model / config_.n_heads));
    Var x = nn::add(nn::gather_rows(tok_emb_, tok), nn::gather_rows(pos_emb_, pos));
    for (const auto& L : layers_) {
        Var h = nn::layer_norm(x, L.ln1_g, L.ln1_b);
        std::vector<Var> heads;
        for (std::size_t k = 0; k < L.wq.size(); ++k) {
            Var q = nn::matmul(h, L.wq[k]);
            Var kk = nn::matmul(h, L.wk[k]);
            Var v = nn::matmul(h, L.wv[k]);
            Var p = nn::causal_softmax(nn::scale(nn::matmul_transposed(q, kk), attn_scale));
            heads.push_back(nn::matmul(p, v));
        }
        Var attn = nn::add_row(nn::matmul(nn::concat_cols(heads), L.wo), L.bo);
        x = nn::add(x, attn);
        Var h2 = nn::layer_norm(x, L.ln2_g, L.ln2_b);
        Var ff = nn::add_row(nn::matmul(nn::gelu(nn::add_row(nn::matmul(h2, L.w1), L.b1)), L.w2), L.b2);
        x = nn::add(x, ff);
    }
    Var hidden = nn::layer_norm(x, lnf_g_, lnf_b_);
    Var logits = nn::matmul(hidden, w_out_);
    return {hidden, logits};
}

}  // namespace ctxpara
