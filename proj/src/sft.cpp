#include "ctxpara/sft.hpp"

#include <cmath>

namespace ctxpara::generator {

using nlohmann::json;

json SftConfig::to_json() const {
    return {{"steps", steps},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"eval_interval", eval_interval},
            {"response_budget", response_budget},
            {"grad_clip", grad_clip},
            {"seed", seed},
            {"recipe", recipe}};
}

SftConfig SftConfig::from_json(const json& j) {
    SftConfig c;
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.response_budget = j.value("response_budget", c.response_budget);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    c.recipe = j.value("recipe", c.recipe);
    return c;
}

SftExample make_example(const corpus::Sample& sample, const PromptRecipe& recipe,
                        const std::vector<std::string>& noise_vocab, bool training, Rng& rng,
                        const LanguageModel& model, int response_budget) {
    if (response_budget < 2) throw ValidationError("response_budget must be >= 2");
    auto inputs = prompt_inputs(sample, recipe, noise_vocab, training, rng);
    SftExample ex;
    ex.prompt = assemble_prompt(inputs.context, inputs.controls, model.tokenizer(), model.max_sequence_length(),
                                response_budget);
    ex.target = model.tokenizer().encode(sample.response);
    if (ex.target.size() > static_cast<std::size_t>(response_budget - 1)) ex.target.resize(static_cast<std::size_t>(response_budget - 1));
    ex.target.push_back(model.tokenizer().vocab().end_of_text());
    return ex;
}

double mean_nll(const LanguageModel& model, const std::vector<SftExample>& examples) {
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& ex : examples) {
        for (double lp : token_logprobs(model, ex.prompt, ex.target)) total -= lp;
        tokens += ex.target.size();
    }
    return tokens ? total / static_cast<double>(tokens) : 0.0;
}

namespace {

std::vector<SftExample> fixed_examples(const std::vector<corpus::Sample>& samples, const PromptRecipe& recipe,
                                       const LanguageModel& model, const SftConfig& config) {
    std::vector<SftExample> out;
    for (const auto& s : samples) {
        Rng rng(derive_seed(config.seed, "sft-val/" + s.id));
        out.push_back(make_example(s, recipe, {}, false, rng, model, config.response_budget));
    }
    return out;
}

}  // namespace

SftHistory sft_train(TransformerLM& model, const std::vector<corpus::Sample>& train,
                     const std::vector<corpus::Sample>& validation, const SftConfig& config,
                     const std::vector<std::string>& noise_vocab) {
    if (config.steps < 0) throw ValidationError("steps must be >= 0");
    if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (config.steps > 0 && train.empty()) throw ValidationError("sft_train: no training samples");
    const PromptRecipe recipe = recipe_for(config.recipe);
    auto& params = model.network().parameters();
    nn::Adam adam({config.learning_rate, 0.9, 0.999, 1e-8, config.grad_clip});
    Rng order_rng(derive_seed(config.seed, "sft-order"));
    const auto val_examples = fixed_examples(validation, recipe, model, config);

    SftHistory history;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    int epoch = -1;
    for (int step = 0; step < config.steps; ++step) {
        std::vector<SftExample> batch;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                order.resize(train.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                order_rng.shuffle(order);
                cursor = 0;
                ++epoch;
            }
            const auto& s = train[order[cursor++]];
            Rng rng(derive_seed(config.seed, "sft-prompt/" + s.id + "/" + std::to_string(epoch)));
            batch.push_back(make_example(s, recipe, noise_vocab, true, rng, model, config.response_budget));
        }
        std::size_t tokens = 0;
        for (const auto& ex : batch) tokens += ex.target.size();

        double batch_loss = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& ex = batch[b];
            std::vector<TokenId> ids(ex.prompt.token_ids);
            ids.insert(ids.end(), ex.target.begin(), ex.target.end() - 1);
            auto out = model.network().forward(ids);
            auto logp = nn::log_softmax_rows(out.logits);
            std::vector<int> rows, cols;
            for (std::size_t t = 0; t < ex.target.size(); ++t) {
                rows.push_back(static_cast<int>(ex.prompt.token_ids.size() - 1 + t));
                cols.push_back(ex.target[t]);
            }
            auto picked = nn::pick(logp, rows, cols);
            auto loss = nn::weighted_sum(picked, nn::Matrix::Constant(picked->value.rows(), 1, -1.0 / static_cast<double>(tokens)));
            const double value = loss->value(0, 0);
            if (!is_finite(value)) {
                throw TrainingError("non-finite SFT loss at step " + std::to_string(step) + ", batch item " +
                                    std::to_string(b) + " (epoch " + std::to_string(epoch) + ")");
            }
            batch_loss += value;
            nn::backward(loss);
        }
        adam.step(params);
        history.train_loss.emplace_back(step + 1, batch_loss);
        const bool last = step + 1 == config.steps;
        if (!val_examples.empty() && config.eval_interval > 0 && ((step + 1) % config.eval_interval == 0 || last)) {
            history.val_loss.emplace_back(step + 1, mean_nll(model, val_examples));
        }
    }
    return history;
}

Vocabulary build_lm_vocabulary(const std::vector<corpus::Sample>& samples, std::size_t min_count,
                               std::size_t max_words) {
    WordTokenizer splitter;
    std::vector<std::vector<std::string>> seqs;
    for (const auto& s : samples) {
        for (const auto& c : s.prefixed_context()) seqs.push_back(splitter.pieces(c));
        seqs.push_back(splitter.pieces(s.response));
        for (const auto& w : s.control_words) seqs.push_back(splitter.pieces(w));
    }
    return Vocabulary::build(seqs, min_count, max_words);
}

}  // namespace ctxpara::generator
