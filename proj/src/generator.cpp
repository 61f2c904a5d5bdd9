#include "ctxpara/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxpara/controlwords.hpp"

namespace ctxpara::generator {

using nlohmann::json;

TransformerLM::TransformerLM(WordTokenizer tokenizer, const TransformerConfig& config, std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), net_(config, seed), seed_(seed) {
    if (static_cast<std::size_t>(config.vocab_size) != tokenizer_.vocab().size())
        throw ValidationError("transformer vocab_size does not match tokenizer vocabulary");
}

nn::Matrix TransformerLM::next_token_logprobs(std::span<const TokenId> ids) const {
    nn::NoGradGuard no_grad;
    auto out = net_.forward(ids);
    return nn::log_softmax_rows(out.logits)->value;
}

void save_checkpoint(const std::filesystem::path& dir, const TransformerLM& model, const json& extra) {
    std::filesystem::create_directories(dir);
    nn::save_parameters(dir / "weights.bin", model.network().parameters());
    model.tokenizer().vocab().save(dir / "vocab.txt");
    json manifest = {
        {"kind", "language_model"},
        {"model_family", "tiny-transformer"},
        {"tokenizer", model.tokenizer().name()},
        {"special_tokens",
         {special::kEndOfText, special::kUnknown, special::kContextControl, special::kControlWord, special::kResponse}},
        {"transformer", to_json(model.network().config())},
        {"init_seed", model.init_seed()},
        {"code_version", code_version()},
    };
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) throw Error("checkpoint manifest not found: " + path.string());
    return json::parse(read_file(path));
}

std::unique_ptr<TransformerLM> load_checkpoint(const std::filesystem::path& dir) {
    auto manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "language_model") throw Error("not a language-model checkpoint: " + dir.string());
    auto config = transformer_config_from_json(manifest.at("transformer"));
    WordTokenizer tok(Vocabulary::load(dir / "vocab.txt"));
    auto model = std::make_unique<TransformerLM>(std::move(tok), config, manifest.value("init_seed", std::uint64_t{0}));
    nn::load_parameters(dir / "weights.bin", model->network().parameters());
    return model;
}

std::string prompt_text(const std::vector<std::string>& context, const std::vector<std::string>& controls,
                        const SeparatorScheme& scheme) {
    std::string text = join(context, " ");
    auto append = [&text](std::string_view piece) {
        if (!text.empty()) text.push_back(' ');
        text.append(piece);
    };
    if (!controls.empty()) {
        append(scheme.context_control);
        for (std::size_t i = 0; i < controls.size(); ++i) {
            if (i) append(scheme.control_word);
            append(controls[i]);
        }
    }
    append(scheme.response);
    return text;
}

PromptEncoding assemble_prompt(const std::vector<std::string>& context, const std::vector<std::string>& controls,
                               const WordTokenizer& tokenizer, int max_sequence_length, int response_budget,
                               const SeparatorScheme& scheme) {
    for (const auto* sep : {&scheme.context_control, &scheme.control_word, &scheme.response}) {
        const TokenId id = tokenizer.vocab().id_of(*sep);
        if (!tokenizer.vocab().is_special(id)) throw ValidationError("separator '" + *sep + "' is not a special token");
    }
    PromptEncoding enc;
    enc.token_ids = tokenizer.encode(prompt_text(context, controls, scheme));
    enc.boundary = enc.token_ids.size();
    const auto needed = enc.token_ids.size() + static_cast<std::size_t>(std::max(response_budget, 0));
    if (needed > static_cast<std::size_t>(max_sequence_length))
        throw LengthError("prompt of " + std::to_string(enc.token_ids.size()) + " tokens plus response budget " +
                          std::to_string(response_budget) + " exceeds max_sequence_length " +
                          std::to_string(max_sequence_length));
    return enc;
}

json PromptRecipe::to_json() const {
    return {{"use_context", use_context},         {"use_controls", use_controls},
            {"noise_fraction", noise_fraction},   {"sample_controls", sample_controls},
            {"sample_rate_min", sample_rate_min}, {"sample_rate_max", sample_rate_max}};
}

PromptRecipe recipe_for(std::string_view approach) {
    PromptRecipe r;
    if (approach == "pretrained" || approach == "only_context") {
        r.use_controls = false;
    } else if (approach == "only_control_words") {
        r.use_context = false;
    } else if (approach == "context_and_control") {
    } else if (approach == "context_control_noise") {
        r.noise_fraction = 0.5;
    } else if (approach == "context_control_sampling" || approach == "rl_finetuned") {
        r.sample_controls = true;
    } else {
        throw ValidationError("unknown approach '" + std::string(approach) + "'");
    }
    return r;
}

PromptInputs prompt_inputs(const corpus::Sample& sample, const PromptRecipe& recipe,
                           const std::vector<std::string>& noise_vocab, bool training, Rng& rng) {
    PromptInputs in;
    if (recipe.use_context) in.context = sample.prefixed_context();
    if (recipe.use_controls) {
        controlwords::ControlWordSet set{sample.control_words, sample.id};
        if (training && recipe.sample_controls) {
            const double rate = rng.uniform(recipe.sample_rate_min, recipe.sample_rate_max);
            set = controlwords::sample_control_words(set, std::min(rate, 1.0), rng);
        }
        if (training && recipe.noise_fraction > 0.0 && !noise_vocab.empty()) {
            set = controlwords::corrupt_control_words(set, noise_vocab, recipe.noise_fraction, rng);
        }
        in.controls = controlwords::order_for_prompt(set, rng);
    }
    return in;
}

std::vector<double> token_logprobs(const LanguageModel& model, const PromptEncoding& prompt,
                                   std::span<const TokenId> target) {
    if (target.empty()) return {};
    if (prompt.token_ids.empty()) throw ValidationError("token_logprobs: empty prompt");
    const std::size_t total = prompt.token_ids.size() + target.size();
    if (total - 1 > static_cast<std::size_t>(model.max_sequence_length()))
        throw LengthError("prompt plus target of " + std::to_string(total) + " tokens exceeds max_sequence_length " +
                          std::to_string(model.max_sequence_length()));
    std::vector<TokenId> ids(prompt.token_ids);
    ids.insert(ids.end(), target.begin(), target.end() - 1);
    const auto lp = model.next_token_logprobs(ids);
    std::vector<double> out;
    out.reserve(target.size());
    const auto start = static_cast<Eigen::Index>(prompt.token_ids.size()) - 1;
    for (std::size_t t = 0; t < target.size(); ++t) out.push_back(lp(start + static_cast<Eigen::Index>(t), target[t]));
    return out;
}

double sequence_logprob(const LanguageModel& model, const PromptEncoding& prompt, std::span<const TokenId> target) {
    const auto lps = token_logprobs(model, prompt, target);
    return std::accumulate(lps.begin(), lps.end(), 0.0);
}

json DecodeConfig::to_json() const {
    return {{"strategy", strategy == DecodeStrategy::greedy ? "greedy" : "top_p"},
            {"temperature", temperature},
            {"top_p", top_p},
            {"max_new_tokens", max_new_tokens},
            {"seed", seed}};
}

DecodeConfig DecodeConfig::from_json(const json& j) {
    DecodeConfig d;
    const auto strategy = j.value("strategy", std::string("top_p"));
    if (strategy == "greedy") d.strategy = DecodeStrategy::greedy;
    else if (strategy == "top_p") d.strategy = DecodeStrategy::top_p;
    else throw ValidationError("unknown decode strategy '" + strategy + "'");
    d.temperature = j.value("temperature", d.temperature);
    d.top_p = j.value("top_p", d.top_p);
    d.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
    d.seed = j.value("seed", d.seed);
    return d;
}

DecodeConfig DecodeConfig::parse(std::string_view spec) {
    DecodeConfig d;
    std::size_t start = 0;
    while (start < spec.size()) {
        auto comma = spec.find(',', start);
        if (comma == std::string_view::npos) comma = spec.size();
        const auto item = trim(spec.substr(start, comma - start));
        start = comma + 1;
        if (item.empty()) continue;
        if (item == "greedy") {
            d.strategy = DecodeStrategy::greedy;
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("bad decode option '" + item + "'");
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        try {
            if (key == "top_p") {
                d.strategy = DecodeStrategy::top_p;
                d.top_p = std::stod(value);
            } else if (key == "temperature") {
                d.temperature = std::stod(value);
            } else if (key == "max_new_tokens") {
                d.max_new_tokens = std::stoi(value);
            } else if (key == "strategy") {
                d.strategy = value == "greedy" ? DecodeStrategy::greedy : DecodeStrategy::top_p;
            } else {
                throw ValidationError("unknown decode option '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw ValidationError("bad value for decode option '" + key + "': " + value);
        }
    }
    if (!(d.top_p > 0.0 && d.top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
    if (!(d.temperature > 0.0)) throw ValidationError("temperature must be positive");
    if (d.max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
    return d;
}

double GenerationResult::logprob() const {
    return std::accumulate(per_token_logprobs.begin(), per_token_logprobs.end(), 0.0);
}

namespace {

TokenId sample_top_p(const Eigen::RowVectorXd& logprobs, double temperature, double top_p, Rng& rng) {
    const auto V = logprobs.size();
    std::vector<double> w(static_cast<std::size_t>(V));
    const double mx = logprobs.maxCoeff();
    for (Eigen::Index i = 0; i < V; ++i) w[static_cast<std::size_t>(i)] = std::exp((logprobs(i) - mx) / temperature);
    const double z = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<int> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[static_cast<std::size_t>(a)] > w[static_cast<std::size_t>(b)]; });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        mass += w[static_cast<std::size_t>(order[keep])] / z;
        ++keep;
        if (mass >= top_p) break;
    }
    double kept = 0.0;
    for (std::size_t k = 0; k < keep; ++k) kept += w[static_cast<std::size_t>(order[k])];
    double u = rng.uniform() * kept;
    for (std::size_t k = 0; k < keep; ++k) {
        u -= w[static_cast<std::size_t>(order[k])];
        if (u < 0.0) return order[k];
    }
    return order[keep - 1];
}

}  // namespace

GenerationResult generate(const LanguageModel& model, const PromptEncoding& prompt, const DecodeConfig& decode,
                          Rng& rng) {
    if (decode.max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
    if (prompt.token_ids.empty()) throw ValidationError("generate: empty prompt");
    GenerationResult result;
    result.decode_config = decode;
    std::vector<TokenId> ids(prompt.token_ids);
    const TokenId eot = model.tokenizer().vocab().end_of_text();
    for (int step = 0; step < decode.max_new_tokens; ++step) {
        if (ids.size() >= static_cast<std::size_t>(model.max_sequence_length()) + 1) break;
        const auto lp = model.next_token_logprobs(ids);
        const Eigen::RowVectorXd last = lp.row(lp.rows() - 1);
        TokenId next;
        if (decode.strategy == DecodeStrategy::greedy) {
            Eigen::Index arg;
            last.maxCoeff(&arg);
            next = static_cast<TokenId>(arg);
        } else {
            next = sample_top_p(last, decode.temperature, decode.top_p, rng);
        }
        result.token_ids.push_back(next);
        result.per_token_logprobs.push_back(last(next));
        if (next == eot) break;
        ids.push_back(next);
    }
    result.text = model.tokenizer().decode(result.token_ids);
    result.empty = trim(result.text).empty();
    return result;
}

}  // namespace ctxpara::generator
