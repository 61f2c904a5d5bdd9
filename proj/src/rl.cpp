#include "ctxpara/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace ctxpara::rl {

using nlohmann::json;

json RlConfig::to_json() const {
    return {{"total_steps", total_steps},
            {"batch_size", batch_size},
            {"ppo_epochs", ppo_epochs},
            {"minibatches_per_batch", minibatches_per_batch},
            {"kl_beta", kl_beta},
            {"clip_epsilon", clip_epsilon},
            {"learning_rate", learning_rate},
            {"value_coef", value_coef},
            {"grad_clip", grad_clip},
            {"adaptive_kl", adaptive_kl},
            {"kl_target", kl_target},
            {"kl_horizon", kl_horizon},
            {"kl_ceiling", kl_ceiling},
            {"response_budget", response_budget},
            {"decode", decode.to_json()},
            {"seed", seed}};
}

RlConfig RlConfig::from_json(const json& j) {
    RlConfig c;
    c.total_steps = j.value("total_steps", c.total_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
    c.minibatches_per_batch = j.value("minibatches_per_batch", c.minibatches_per_batch);
    c.kl_beta = j.value("kl_beta", c.kl_beta);
    c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.value_coef = j.value("value_coef", c.value_coef);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.adaptive_kl = j.value("adaptive_kl", c.adaptive_kl);
    c.kl_target = j.value("kl_target", c.kl_target);
    c.kl_horizon = j.value("kl_horizon", c.kl_horizon);
    c.kl_ceiling = j.value("kl_ceiling", c.kl_ceiling);
    c.response_budget = j.value("response_budget", c.response_budget);
    if (j.contains("decode")) c.decode = generator::DecodeConfig::from_json(j.at("decode"));
    c.seed = j.value("seed", c.seed);
    return c;
}

void RlConfig::validate() const {
    std::vector<std::string> bad;
    if (total_steps < 1) bad.push_back("total_steps must be >= 1");
    if (batch_size < 1) bad.push_back("batch_size must be >= 1");
    if (ppo_epochs < 1) bad.push_back("ppo_epochs must be >= 1");
    if (minibatches_per_batch < 1 || minibatches_per_batch > batch_size)
        bad.push_back("minibatches_per_batch must be in [1, batch_size]");
    if (!(kl_beta >= 0.0)) bad.push_back("kl_beta must be >= 0");
    if (!(clip_epsilon > 0.0)) bad.push_back("clip_epsilon must be > 0");
    if (!(learning_rate >= 0.0)) bad.push_back("learning_rate must be >= 0");
    if (response_budget < 2) bad.push_back("response_budget must be >= 2");
    if (decode.max_new_tokens > response_budget) bad.push_back("decode.max_new_tokens must be <= response_budget");
    if (!bad.empty()) throw ValidationError("invalid RL config: " + join(bad, "; "));
}

double kl_penalized_reward(double r, double logprob_policy, double logprob_ref, double beta) {
    if (!is_finite(r) || !is_finite(logprob_policy) || !is_finite(logprob_ref) || !is_finite(beta))
        throw ValidationError("kl_penalized_reward: non-finite input");
    if (beta < 0.0) throw ValidationError("kl_penalized_reward: beta must be non-negative");
    return r - beta * (logprob_policy - logprob_ref);
}

Reward CompositeReward::operator()(const RlPrompt& prompt, const generator::GenerationResult& generation) const {
    auto s = evaluator_->score(prompt.context, prompt.actual, generation.text, prompt.id);
    return {s.composite, s};
}

double RolloutBatch::mean_raw_reward() const {
    double s = 0.0;
    for (const auto& r : rollouts) s += r.raw_reward;
    return rollouts.empty() ? 0.0 : s / static_cast<double>(rollouts.size());
}

double RolloutBatch::mean_shaped_reward() const {
    double s = 0.0;
    for (const auto& r : rollouts) s += r.shaped_reward;
    return rollouts.empty() ? 0.0 : s / static_cast<double>(rollouts.size());
}

double RolloutBatch::mean_log_ratio() const {
    double s = 0.0;
    for (const auto& r : rollouts) {
        s += std::accumulate(r.policy_logprobs.begin(), r.policy_logprobs.end(), 0.0) -
             std::accumulate(r.ref_logprobs.begin(), r.ref_logprobs.end(), 0.0);
    }
    return rollouts.empty() ? 0.0 : s / static_cast<double>(rollouts.size());
}

namespace {

void check_compatible(const generator::LanguageModel& a, const generator::LanguageModel& b) {
    const auto& va = a.tokenizer().vocab();
    const auto& vb = b.tokenizer().vocab();
    if (va.size() != vb.size()) throw ValidationError("policy and reference vocabularies differ in size");
    for (TokenId id = 0; id < static_cast<TokenId>(va.size()); ++id) {
        if (va.piece(id) != vb.piece(id)) throw ValidationError("policy and reference vocabularies differ");
    }
}

}  // namespace

RolloutBatch collect_rollouts(const generator::LanguageModel& policy, const generator::LanguageModel& reference,
                              const std::vector<RlPrompt>& prompts, const std::vector<std::size_t>& indices,
                              const RewardFunction& reward, const generator::DecodeConfig& decode, double kl_beta,
                              Rng& rng) {
    check_compatible(policy, reference);
    RolloutBatch batch;
    for (std::size_t idx : indices) {
        const auto& p = prompts.at(idx);
        Rollout r;
        r.prompt_index = idx;
        r.generation = generator::generate(policy, p.prompt, decode, rng);
        r.policy_logprobs = r.generation.per_token_logprobs;
        r.ref_logprobs = generator::token_logprobs(reference, p.prompt, r.generation.token_ids);
        Reward rw;
        try {
            rw = reward(p, r.generation);
        } catch (const std::exception& e) {
            throw Error("reward failed for prompt '" + p.id + "': " + e.what());
        }
        r.raw_reward = rw.value;
        r.breakdown = rw.breakdown;
        r.shaped_reward = kl_penalized_reward(r.raw_reward,
                                              std::accumulate(r.policy_logprobs.begin(), r.policy_logprobs.end(), 0.0),
                                              std::accumulate(r.ref_logprobs.begin(), r.ref_logprobs.end(), 0.0),
                                              kl_beta);
        batch.rollouts.push_back(std::move(r));
    }
    return batch;
}

ValueHead::ValueHead(int d_model) {
    params_.push_back({"value.w", nn::parameter(nn::Matrix::Zero(d_model, 1))});
    params_.push_back({"value.b", nn::parameter(nn::Matrix::Zero(1, 1))});
}

nn::Var ValueHead::values(const nn::Var& hidden) const {
    return nn::add_row(nn::matmul(hidden, params_[0].var), params_[1].var);
}

std::vector<double> whiten(const std::vector<double>& values) {
    if (values.empty()) return {};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(values.size(), 0.0);
    if (sd < 1e-8) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
    return out;
}

PpoState::PpoState(generator::TransformerLM& p, const RlConfig& config)
    : policy(&p),
      value_head(p.network().config().d_model),
      adam({config.learning_rate, 0.9, 0.999, 1e-8, config.grad_clip}) {
    params = p.network().parameters();
    for (const auto& v : value_head.parameters()) params.push_back(v);
}

UpdateStats ppo_update(PpoState& state, const std::vector<RlPrompt>& prompts, const RolloutBatch& batch,
                       const RlConfig& config, Rng& rng, int step) {
    if (batch.rollouts.empty()) throw ValidationError("ppo_update: empty batch");
    std::vector<double> shaped;
    for (const auto& r : batch.rollouts) shaped.push_back(r.shaped_reward);
    const auto returns = whiten(shaped);

    auto& net = state.policy->network();
    UpdateStats stats;
    double kl_sum = 0.0, clipped = 0.0, tokens_seen = 0.0, pl_sum = 0.0, vl_sum = 0.0;
    std::vector<std::size_t> order(batch.rollouts.size());
    const std::size_t n_mb = static_cast<std::size_t>(std::max(1, config.minibatches_per_batch));

    for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        if (n_mb > 1) rng.shuffle(order);
        double epoch_clipped = 0.0, epoch_tokens = 0.0;
        for (std::size_t mb = 0; mb < n_mb; ++mb) {
            const std::size_t lo = mb * order.size() / n_mb;
            const std::size_t hi = (mb + 1) * order.size() / n_mb;
            double mb_tokens = 0.0;
            for (std::size_t k = lo; k < hi; ++k) mb_tokens += static_cast<double>(batch.rollouts[order[k]].generation.token_ids.size());
            if (mb_tokens == 0.0) continue;
            for (std::size_t k = lo; k < hi; ++k) {
                const auto& r = batch.rollouts[order[k]];
                const auto& gen = r.generation.token_ids;
                if (gen.empty()) continue;
                const auto& prompt = prompts.at(r.prompt_index).prompt.token_ids;
                std::vector<TokenId> ids(prompt);
                ids.insert(ids.end(), gen.begin(), gen.end() - 1);
                const int first = static_cast<int>(prompt.size()) - 1;
                const int n = static_cast<int>(gen.size());
                auto out = net.forward(ids);
                auto logp = nn::log_softmax_rows(nn::take_rows(out.logits, first, n));
                std::vector<int> rows(static_cast<std::size_t>(n)), cols(static_cast<std::size_t>(n));
                for (int t = 0; t < n; ++t) {
                    rows[static_cast<std::size_t>(t)] = t;
                    cols[static_cast<std::size_t>(t)] = gen[static_cast<std::size_t>(t)];
                }
                auto new_lp = nn::pick(logp, rows, cols);
                auto values = state.value_head.values(nn::take_rows(out.hidden, first, n));

                const double ret = returns[order[k]];
                nn::Matrix w_pol(n, 1), w_val(n, 1);
                for (int t = 0; t < n; ++t) {
                    const double nl = new_lp->value(t, 0);
                    const double ol = r.policy_logprobs[static_cast<std::size_t>(t)];
                    const double v = values->value(t, 0);
                    const double adv = ret - v;
                    const double ratio = std::exp(nl - ol);
                    const double clipped_ratio = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
                    const double unclipped_obj = ratio * adv;
                    const double clipped_obj = clipped_ratio * adv;
                    // -min(ratio A, clip(ratio) A); only the unclipped branch carries gradient
                    w_pol(t, 0) = unclipped_obj <= clipped_obj ? -adv * ratio / mb_tokens : 0.0;
                    w_val(t, 0) = config.value_coef * (v - ret) / mb_tokens;
                    pl_sum += -std::min(unclipped_obj, clipped_obj);
                    vl_sum += 0.5 * (v - ret) * (v - ret);
                    kl_sum += 0.5 * (nl - ol) * (nl - ol);
                    if (std::abs(ratio - 1.0) > config.clip_epsilon) {
                        clipped += 1.0;
                        epoch_clipped += 1.0;
                    }
                    tokens_seen += 1.0;
                    epoch_tokens += 1.0;
                }
                // d(ratio)/d(new_lp) = ratio, already folded into w_pol
                auto loss = nn::add(nn::weighted_sum(new_lp, w_pol), nn::weighted_sum(values, w_val));
                if (!is_finite(loss->value(0, 0)) || !w_pol.allFinite() || !w_val.allFinite()) {
                    throw TrainingError("non-finite PPO loss at step " + std::to_string(step) + ", epoch " +
                                        std::to_string(epoch) + ", rollout " + std::to_string(order[k]) +
                                        " (prompt '" + prompts.at(r.prompt_index).id + "')");
                }
                nn::backward(loss);
            }
            state.adam.step(state.params);
        }
        stats.clip_fraction_per_epoch.push_back(epoch_tokens > 0 ? epoch_clipped / epoch_tokens : 0.0);
    }
    if (tokens_seen > 0) {
        stats.policy_loss = pl_sum / tokens_seen;
        stats.value_loss = vl_sum / tokens_seen;
        stats.approx_kl = kl_sum / tokens_seen;
        stats.clip_fraction = clipped / tokens_seen;
    }
    return stats;
}

std::string curve_csv(const std::vector<CurveRow>& rows) {
    std::string out = "step,mean_raw_reward,mean_shaped_reward,approx_kl,clip_fraction,kl_beta\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.mean_raw_reward,
                      r.mean_shaped_reward, r.approx_kl, r.clip_fraction, r.kl_beta);
        out += buf;
    }
    return out;
}

RlResult train_rl(generator::TransformerLM& policy, const generator::TransformerLM& reference,
                  const std::vector<RlPrompt>& prompts, const RewardFunction& reward, const RlConfig& config,
                  const std::function<void(const CurveRow&)>& on_step) {
    config.validate();
    if (prompts.empty()) throw ValidationError("train_rl: no prompts");
    check_compatible(policy, reference);

    RlResult result;
    result.reference_hash_start = nn::parameter_hash(reference.network().parameters());
    PpoState state(policy, config);
    Rng order_rng(derive_seed(config.seed, "rl-order"));
    Rng ppo_rng(derive_seed(config.seed, "rl-minibatch"));
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    double beta = config.kl_beta;
    int over_ceiling = 0;

    for (int step = 1; step <= config.total_steps; ++step) {
        std::vector<std::size_t> indices;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                order.resize(prompts.size());
                std::iota(order.begin(), order.end(), 0);
                order_rng.shuffle(order);
                cursor = 0;
            }
            indices.push_back(order[cursor++]);
        }
        Rng rollout_rng(derive_seed(config.seed, "rl-rollout/" + std::to_string(step)));
        const auto batch = collect_rollouts(policy, reference, prompts, indices, reward, config.decode, beta, rollout_rng);
        const auto stats = ppo_update(state, prompts, batch, config, ppo_rng, step);

        CurveRow row{step, batch.mean_raw_reward(), batch.mean_shaped_reward(), stats.approx_kl, stats.clip_fraction,
                     beta};
        result.curve.push_back(row);
        if (on_step) on_step(row);

        if (nn::parameter_hash(reference.network().parameters()) != result.reference_hash_start)
            throw Error("reference model changed during RL at step " + std::to_string(step));

        over_ceiling = stats.approx_kl > config.kl_ceiling ? over_ceiling + 1 : 0;
        if (over_ceiling >= 10) {
            throw TrainingError("approx_kl above ceiling " + std::to_string(config.kl_ceiling) +
                                " for 10 consecutive steps (step " + std::to_string(step) + ", approx_kl " +
                                std::to_string(stats.approx_kl) + ", mean raw reward " +
                                std::to_string(row.mean_raw_reward) + ")");
        }
        if (config.adaptive_kl) {
            const double kl = batch.mean_log_ratio();
            const double err = std::clamp(kl / config.kl_target - 1.0, -0.2, 0.2);
            beta *= 1.0 + err * static_cast<double>(config.batch_size) / config.kl_horizon;
        }
    }
    result.reference_hash_end = nn::parameter_hash(reference.network().parameters());
    result.final_kl_beta = beta;
    return result;
}

double mean_reward(const generator::LanguageModel& model, const std::vector<RlPrompt>& prompts,
                   const RewardFunction& reward, const generator::DecodeConfig& decode, int samples_per_prompt,
                   std::uint64_t seed) {
    if (prompts.empty() || samples_per_prompt < 1) return 0.0;
    Rng rng(derive_seed(seed, "rl-mean-reward"));
    double total = 0.0;
    for (const auto& p : prompts) {
        for (int s = 0; s < samples_per_prompt; ++s) total += reward(p, generator::generate(model, p.prompt, decode, rng)).value;
    }
    return total / static_cast<double>(prompts.size() * static_cast<std::size_t>(samples_per_prompt));
}

std::vector<RlPrompt> make_prompts(const std::vector<corpus::Sample>& samples, const generator::LanguageModel& model,
                                   const generator::PromptRecipe& recipe, int response_budget, std::uint64_t seed) {
    std::vector<RlPrompt> out;
    for (const auto& s : samples) {
        Rng rng(derive_seed(seed, "rl-prompt/" + s.id));
        const auto in = generator::prompt_inputs(s, recipe, {}, false, rng);
        out.push_back({s.id,
                       generator::assemble_prompt(in.context, in.controls, model.tokenizer(),
                                                  model.max_sequence_length(), response_budget),
                       corpus::flatten_context(s.context), s.response});
    }
    return out;
}

}  // namespace ctxpara::rl
