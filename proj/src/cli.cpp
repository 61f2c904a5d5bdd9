#include "ctxpara/cli.hpp"

#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "ctxpara/common.hpp"
#include "ctxpara/controlwords.hpp"
#include "ctxpara/corpus.hpp"
#include "ctxpara/entailment.hpp"
#include "ctxpara/evalharness.hpp"
#include "ctxpara/fluency.hpp"
#include "ctxpara/generator.hpp"
#include "ctxpara/metrics.hpp"
#include "ctxpara/pos_tagger.hpp"
#include "ctxpara/rl.hpp"
#include "ctxpara/sft.hpp"

namespace ctxpara::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json without_seed(json j) {
    j.erase("seed");
    for (auto& [k, v] : j.items()) {
        if (v.is_object()) v = without_seed(v);
    }
    return j;
}

}  // namespace

json default_config() {
    json sft = generator::SftConfig{}.to_json();
    json ent = entailment::TrainConfig{}.to_json();
    json rl = rl::RlConfig{}.to_json();
    return {
        {"seed", 0},
        {"corpus", {{"window", 6}, {"max_context_tokens", 48}, {"train_fraction", 0.8}}},
        {"lm",
         {{"min_count", 1}, {"max_words", 4000}, {"max_len", 128}, {"d_model", 32}, {"n_layers", 2}, {"n_heads", 2},
          {"d_ff", 64}}},
        {"sft", without_seed(sft)},
        {"entailment", without_seed(ent)},
        {"fluency", without_seed(fluency::FluencyConfig{}.to_json())},
        {"bleu", metrics::BleuConfig{}.to_json()},
        {"decode", without_seed(generator::DecodeConfig{}.to_json())},
        {"rl", without_seed(rl)},
        {"nuc", {{"distractors", 9}}},
        {"eval", {{"response_budget", 32}}},
    };
}

namespace {

void collect_errors(const json& schema, const json& given, const std::string& path, std::vector<std::string>& errors) {
    if (!given.is_object()) {
        errors.push_back((path.empty() ? "<root>" : path) + ": expected an object");
        return;
    }
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!schema.contains(it.key())) {
            errors.push_back(key + ": unknown key");
            continue;
        }
        const auto& want = schema.at(it.key());
        const auto& got = it.value();
        if (want.is_object()) {
            collect_errors(want, got, key, errors);
        } else if (want.is_boolean() && !got.is_boolean()) {
            errors.push_back(key + ": expected a boolean");
        } else if (want.is_string() && !got.is_string()) {
            errors.push_back(key + ": expected a string");
        } else if (want.is_number_integer() && !got.is_number_integer()) {
            errors.push_back(key + ": expected an integer");
        } else if (want.is_number_float() && !got.is_number()) {
            errors.push_back(key + ": expected a number");
        } else if (want.is_array() && !got.is_array()) {
            errors.push_back(key + ": expected an array");
        }
    }
}

}  // namespace

std::vector<std::string> config_errors(const json& given) {
    std::vector<std::string> errors;
    collect_errors(default_config(), given, "", errors);
    return errors;
}

json resolve_config(const json& given) {
    const auto errors = config_errors(given);
    if (!errors.empty()) throw ValidationError("invalid config:\n  " + join(errors, "\n  "));
    json merged = default_config();
    merged.merge_patch(given);
    return merged;
}

namespace {

struct Context {
    std::vector<std::string> args;
    std::string command;
    json config;
    std::uint64_t seed = 0;

    std::uint64_t seed_for(std::string_view op) const { return derive_seed(seed, op); }
};

void log(const std::string& msg) { std::cerr << "[ctxpara] " << msg << "\n"; }

json run_info(const Context& ctx) {
    return {{"command", ctx.command},
            {"args", ctx.args},
            {"seed", ctx.seed},
            {"config", ctx.config},
            {"code_version", code_version()}};
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, j.dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
}

// Run manifest beside a file output, or inside a directory output.
void manifest_for_file(const Context& ctx, const fs::path& out) {
    write_json(fs::path(out.string() + ".manifest.json"), run_info(ctx));
}
void manifest_for_dir(const Context& ctx, const fs::path& dir) { write_json(dir / "run_manifest.json", run_info(ctx)); }

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

TransformerConfig lm_config(const json& lm, int vocab_size) {
    TransformerConfig c;
    c.vocab_size = vocab_size;
    c.max_len = lm.at("max_len").get<int>();
    c.d_model = lm.at("d_model").get<int>();
    c.n_layers = lm.at("n_layers").get<int>();
    c.n_heads = lm.at("n_heads").get<int>();
    c.d_ff = lm.at("d_ff").get<int>();
    return c;
}

generator::DecodeConfig decode_config(const Context& ctx, const std::string& spec, std::string_view op) {
    auto d = spec.empty() ? generator::DecodeConfig::from_json(ctx.config.at("decode"))
                          : generator::DecodeConfig::parse(spec);
    d.seed = ctx.seed_for(op);
    return d;
}

struct Evaluator {
    entailment::HashEncoder encoder;
    fluency::LogisticFluencyModel fluency;
    metrics::HashTokenEmbedder embedder;
    metrics::CompositeEvaluator evaluator;

    Evaluator(const fs::path& ent_dir, const fs::path& flu_dir, const metrics::BleuConfig& bleu)
        : encoder(load_encoder(ent_dir)),
          fluency(load_fluency(flu_dir)),
          embedder(encoder),
          evaluator(metrics::Components{&encoder, &fluency, &embedder, bleu}) {}

    static entailment::HashEncoder load_encoder(const fs::path& dir) {
        if (!fs::exists(dir / "manifest.json"))
            throw metrics::ComponentError("textual_entailment", "checkpoint not found: " + dir.string());
        return entailment::HashEncoder::load(dir);
    }
    static fluency::LogisticFluencyModel load_fluency(const fs::path& dir) {
        if (!fs::exists(dir / "manifest.json"))
            throw metrics::ComponentError("fluency", "checkpoint not found: " + dir.string());
        return fluency::LogisticFluencyModel::load(dir);
    }
};

// ---------------------------------------------------------------------------

void cmd_ingest(const Context& ctx, const std::string& input, const std::string& out, bool strict) {
    require(input, "--input");
    require(out, "--out");
    const auto corpus = corpus::ingest_transcripts_file(input, {!strict});
    const auto& s = corpus.summary();
    json summary = {{"records", s.records},
                    {"conversations", s.conversations},
                    {"turns", s.turns},
                    {"dropped_empty_turns", s.dropped_empty_turns}};
    json errors = json::array(), warnings = json::array();
    for (const auto& e : s.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    for (const auto& w : s.warnings) warnings.push_back({{"line", w.line}, {"message", w.message}});
    summary["errors"] = errors;
    summary["warnings"] = warnings;
    write_text(fs::path(out) / "corpus.jsonl", corpus::serialize_transcripts(corpus));
    write_json(fs::path(out) / "ingest_summary.json", summary);
    manifest_for_dir(ctx, out);
    log("ingested " + std::to_string(s.conversations) + " conversations (" + std::to_string(s.errors.size()) +
        " malformed records skipped)");
}

void cmd_build_samples(const Context& ctx, const std::string& corpus_path, const std::string& out) {
    require(corpus_path, "--corpus");
    require(out, "--out");
    const auto& cc = ctx.config.at("corpus");
    const auto corpus = corpus::ingest_transcripts_file(corpus_path, {false});
    WordTokenizer tokenizer;
    corpus::SampleOptions opts{cc.at("window").get<std::size_t>(), cc.at("max_context_tokens").get<std::size_t>()};
    const auto samples = corpus::build_samples(corpus, opts, tokenizer);
    const auto split = corpus::split(samples, cc.at("train_fraction").get<double>(), ctx.seed_for("split"));
    const fs::path dir(out);
    write_text(dir / "samples.jsonl", corpus::serialize_samples(samples));
    corpus::save_samples(dir / "train.jsonl", split.train);
    corpus::save_samples(dir / "validation.jsonl", split.validation);
    corpus::save_pairs(dir / "pairs_train.jsonl", corpus::entailment_pairs_from_samples(split.train));
    corpus::save_pairs(dir / "pairs_validation.jsonl", corpus::entailment_pairs_from_samples(split.validation));
    manifest_for_dir(ctx, dir);
    log("built " + std::to_string(samples.size()) + " samples (" + std::to_string(split.train.size()) + " train, " +
        std::to_string(split.validation.size()) + " validation)");
}

void cmd_extract_controls(const Context& ctx, const std::vector<std::string>& inputs, const std::string& out) {
    if (inputs.empty()) throw ValidationError("missing required option --samples");
    require(out, "--out");
    const auto tagger = make_tagger(std::string(RuleTagger::kName));
    std::vector<std::string> responses;
    std::size_t empty_sets = 0, total = 0;
    for (const auto& in : inputs) {
        auto samples = corpus::load_samples(in);
        for (auto& s : samples) {
            s.control_words = controlwords::extract_control_words(s.response, *tagger).words;
            responses.push_back(s.response);
            if (s.control_words.empty()) ++empty_sets;
            ++total;
        }
        corpus::save_samples(fs::path(out) / fs::path(in).filename(), samples);
    }
    write_text(fs::path(out) / "control_vocab.txt", join(controlwords::build_vocab(responses), "\n") + "\n");
    auto info = run_info(ctx);
    info["tagger"] = tagger->id();
    write_json(fs::path(out) / "run_manifest.json", info);
    log("extracted control words for " + std::to_string(total) + " samples (" + std::to_string(empty_sets) +
        " with none)");
}

std::vector<std::string> control_noise_vocab(const std::vector<corpus::Sample>& samples) {
    std::vector<std::string> words;
    for (const auto& s : samples) words.insert(words.end(), s.control_words.begin(), s.control_words.end());
    return controlwords::build_vocab(words);
}

void cmd_train_sft(const Context& ctx, const std::string& train_path, const std::string& val_path,
                   const std::string& out, const std::string& recipe, std::optional<int> steps) {
    require(train_path, "--train");
    require(out, "--out");
    auto cfg = generator::SftConfig::from_json(ctx.config.at("sft"));
    cfg.seed = ctx.seed_for("sft");
    if (!recipe.empty()) cfg.recipe = recipe;
    if (steps) cfg.steps = *steps;
    generator::recipe_for(cfg.recipe);

    const auto train = corpus::load_samples(train_path);
    const auto validation = val_path.empty() ? std::vector<corpus::Sample>{} : corpus::load_samples(val_path);
    const auto& lm = ctx.config.at("lm");
    auto vocab = generator::build_lm_vocabulary(train, lm.at("min_count").get<std::size_t>(),
                                                lm.at("max_words").get<std::size_t>());
    const int vocab_size = static_cast<int>(vocab.size());
    generator::TransformerLM model(WordTokenizer(std::move(vocab)), lm_config(lm, vocab_size), ctx.seed_for("lm-init"));
    log("training SFT recipe " + cfg.recipe + " for " + std::to_string(cfg.steps) + " steps, vocab " +
        std::to_string(vocab_size));
    const auto history = generator::sft_train(model, train, validation, cfg, control_noise_vocab(train));

    std::string csv = "step,kind,loss\n";
    json val = json::array();
    for (const auto& [step, loss] : history.train_loss) csv += std::to_string(step) + ",train," + std::to_string(loss) + "\n";
    for (const auto& [step, loss] : history.val_loss) {
        csv += std::to_string(step) + ",validation," + std::to_string(loss) + "\n";
        val.push_back({{"step", step}, {"nll", loss}});
    }
    generator::save_checkpoint(out, model,
                               {{"approach", cfg.recipe},
                                {"recipe", generator::recipe_for(cfg.recipe).to_json()},
                                {"sft", cfg.to_json()},
                                {"validation_nll", val},
                                {"run", run_info(ctx)}});
    write_text(fs::path(out) / "history.csv", csv);
    if (!history.val_loss.empty()) log("final validation NLL " + std::to_string(history.val_loss.back().second));
}

void cmd_train_entailment(const Context& ctx, const std::string& train_path, const std::string& val_path,
                          const std::string& out) {
    require(train_path, "--train");
    require(out, "--out");
    auto cfg = entailment::TrainConfig::from_json(ctx.config.at("entailment"));
    cfg.seed = ctx.seed_for("entailment");
    cfg.encoder.seed = ctx.seed_for("entailment-init");
    const auto train = corpus::load_pairs(train_path);
    entailment::HashEncoder encoder(cfg.encoder);
    json extra = {{"train", cfg.to_json()}, {"run", run_info(ctx)}};
    std::vector<corpus::EntailmentPair> val;
    if (!val_path.empty()) {
        val = corpus::load_pairs(val_path);
        extra["in_batch_accuracy_before"] = entailment::in_batch_accuracy(encoder, val, cfg.batch_size);
    }
    const auto result = entailment::train_entailment(encoder, train, cfg);
    if (!result.loss_curve.empty()) {
        extra["loss_first"] = result.loss_curve.front();
        extra["loss_last"] = result.loss_curve.back();
    }
    if (!val.empty()) extra["in_batch_accuracy_after"] = entailment::in_batch_accuracy(encoder, val, cfg.batch_size);
    encoder.save(out, extra);
    log("trained entailment encoder on " + std::to_string(train.size()) + " pairs");
}

void cmd_eval_nuc(const Context& ctx, const std::string& ckpt, const std::string& pairs_path,
                  const std::string& cases_path, const std::string& out) {
    require(ckpt, "--ckpt");
    require(out, "--out");
    if (pairs_path.empty() == cases_path.empty()) throw ValidationError("give exactly one of --pairs or --cases");
    const auto encoder = entailment::HashEncoder::load(ckpt);
    std::vector<entailment::NucCase> cases;
    if (!cases_path.empty()) {
        cases = entailment::load_nuc_cases(cases_path);
    } else {
        cases = entailment::build_nuc_cases(corpus::load_pairs(pairs_path), ctx.seed_for("nuc"),
                                            ctx.config.at("nuc").at("distractors").get<std::size_t>());
        entailment::save_nuc_cases(fs::path(out) / "nuc_cases.jsonl", cases);
    }
    const auto m = entailment::evaluate_nuc(encoder, cases);
    write_json(fs::path(out) / "nuc_metrics.json",
               {{"cases", m.cases}, {"r_at_1", m.r_at_1}, {"r_at_2", m.r_at_2}, {"mrr", m.mrr}});
    manifest_for_dir(ctx, out);
    log("NUC R@1 " + std::to_string(m.r_at_1) + "  R@2 " + std::to_string(m.r_at_2) + "  MRR " + std::to_string(m.mrr));
}

void cmd_train_fluency(const Context& ctx, const std::string& train_path, const std::string& dev_path,
                       const std::string& out) {
    require(train_path, "--train");
    require(out, "--out");
    auto cfg = fluency::FluencyConfig::from_json(ctx.config.at("fluency"));
    cfg.seed = ctx.seed_for("fluency");
    fluency::LogisticFluencyModel model(cfg);
    const auto train = fluency::load_cola_tsv(train_path, fluency::Domain::in_domain);
    const auto result = fluency::train_fluency(model, train);
    json extra = {{"run", run_info(ctx)}, {"train_examples", train.size()}};
    if (!result.loss_curve.empty()) extra["final_loss"] = result.loss_curve.back();
    if (!dev_path.empty()) {
        const auto dev = fluency::evaluate_fluency(model, fluency::load_cola_tsv(dev_path, fluency::Domain::in_domain));
        extra["dev"] = {{"mcc", dev.mcc}, {"accuracy", dev.accuracy}, {"n", dev.n}};
        log("fluency dev MCC " + std::to_string(dev.mcc));
    }
    model.save(out, extra);
}

void cmd_eval_fluency(const Context& ctx, const std::string& ckpt, const std::string& test_path,
                      const std::string& domain, const std::string& out) {
    require(ckpt, "--ckpt");
    require(test_path, "--test");
    require(out, "--out");
    const auto model = fluency::LogisticFluencyModel::load(ckpt);
    const auto d = fluency::parse_domain(domain);
    const auto r = fluency::evaluate_fluency(model, fluency::load_cola_tsv(test_path, d));
    write_json(out, {{"mcc", r.mcc}, {"accuracy", r.accuracy}, {"n", r.n}, {"domain", fluency::to_string(d)},
                     {"threshold", 0.5}});
    manifest_for_file(ctx, out);
    log("fluency MCC " + std::to_string(r.mcc) + " on " + std::to_string(r.n) + " examples");
}

void cmd_generate(const Context& ctx, const std::string& ckpt, const std::string& samples_path,
                  const std::string& approach, const std::string& decode_spec, const std::string& out) {
    require(ckpt, "--ckpt");
    require(samples_path, "--samples");
    require(out, "--out");
    if (!fs::exists(fs::path(ckpt) / "manifest.json")) throw Error("checkpoint not found: " + ckpt);
    const auto model = generator::load_checkpoint(ckpt);
    std::string name = approach;
    if (name.empty()) name = generator::read_manifest(ckpt).value("approach", std::string("context_and_control"));
    const auto spec = evalharness::ApproachSpec::make(name, ckpt);
    const auto decode = decode_config(ctx, decode_spec, "decode");
    const auto gens = evalharness::generate_for(*model, spec, corpus::load_samples(samples_path), decode,
                                                ctx.config.at("eval").at("response_budget").get<int>(),
                                                ctx.seed_for("generate"));
    write_text(out, evalharness::serialize_generations(gens));
    auto info = run_info(ctx);
    info["decode"] = decode.to_json();
    info["approach"] = name;
    write_json(fs::path(out + ".manifest.json"), info);
    log("generated " + std::to_string(gens.size()) + " paraphrases with " + name);
}

void cmd_score(const Context& ctx, const std::string& gens_path, const std::string& samples_path,
               const std::string& ent, const std::string& flu, const std::string& out) {
    require(gens_path, "--generations");
    require(samples_path, "--samples");
    require(ent, "--entailment-ckpt");
    require(flu, "--fluency-ckpt");
    require(out, "--out");
    Evaluator ev(ent, flu, metrics::BleuConfig::from_json(ctx.config.at("bleu")));
    const auto scores = evalharness::score_generations(ev.evaluator, evalharness::load_generations(gens_path),
                                                       corpus::load_samples(samples_path));
    write_text(out, metrics::serialize_scores(scores));
    auto info = run_info(ctx);
    info["evaluator"] = ev.evaluator.describe();
    write_json(fs::path(out + ".manifest.json"), info);
    log("scored " + std::to_string(scores.size()) + " generations");
}

void cmd_train_rl(const Context& ctx, const std::string& sft, const std::string& samples_path, const std::string& ent,
                  const std::string& flu, const std::string& out) {
    require(sft, "--sft-ckpt");
    require(samples_path, "--samples");
    require(ent, "--entailment-ckpt");
    require(flu, "--fluency-ckpt");
    require(out, "--out");
    auto cfg = rl::RlConfig::from_json(ctx.config.at("rl"));
    cfg.seed = ctx.seed_for("rl");
    cfg.decode.seed = ctx.seed_for("rl-decode");
    cfg.validate();
    if (!fs::exists(fs::path(sft) / "manifest.json")) throw Error("SFT checkpoint not found: " + sft);
    Evaluator ev(ent, flu, metrics::BleuConfig::from_json(ctx.config.at("bleu")));
    auto policy = generator::load_checkpoint(sft);
    const generator::TransformerLM reference(*policy);
    const auto prompts = rl::make_prompts(corpus::load_samples(samples_path), *policy,
                                          generator::recipe_for("rl_finetuned"), cfg.response_budget,
                                          ctx.seed_for("rl-prompts"));
    rl::CompositeReward reward(ev.evaluator);
    const auto result = rl::train_rl(*policy, reference, prompts, reward, cfg, [&](const rl::CurveRow& row) {
        if (row.step == 1 || row.step % 10 == 0 || row.step == cfg.total_steps) {
            log("rl step " + std::to_string(row.step) + " raw " + std::to_string(row.mean_raw_reward) + " shaped " +
                std::to_string(row.mean_shaped_reward) + " kl " + std::to_string(row.approx_kl));
        }
    });
    generator::save_checkpoint(out, *policy,
                               {{"approach", "rl_finetuned"},
                                {"recipe", generator::recipe_for("rl_finetuned").to_json()},
                                {"rl", cfg.to_json()},
                                {"initialized_from", sft},
                                {"reference_hash", std::to_string(result.reference_hash_end)},
                                {"final_kl_beta", result.final_kl_beta},
                                {"evaluator", ev.evaluator.describe()},
                                {"run", run_info(ctx)}});
    write_text(fs::path(out) / "training_curve.csv", rl::curve_csv(result.curve));
}

fs::path resolve_against(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void cmd_evaluate(const Context& ctx, const std::string& grid_path, const std::string& out) {
    require(grid_path, "--grid");
    require(out, "--out");
    const auto grid = json::parse(read_file(grid_path));
    std::vector<std::string> bad;
    for (const char* key : {"samples", "entailment_ckpt", "fluency_ckpt", "approaches"}) {
        if (!grid.contains(key)) bad.push_back(std::string(key) + ": missing");
    }
    for (auto it = grid.begin(); it != grid.end(); ++it) {
        static const std::set<std::string> known = {"samples", "entailment_ckpt", "fluency_ckpt", "approaches",
                                                    "human_labels", "decode"};
        if (!known.count(it.key())) bad.push_back(it.key() + ": unknown key");
    }
    if (!bad.empty()) throw ValidationError("invalid grid config:\n  " + join(bad, "\n  "));
    const fs::path base = fs::path(grid_path).parent_path();

    // every checkpoint must exist before anything is generated
    std::vector<evalharness::ApproachSpec> specs;
    for (auto it = grid.at("approaches").begin(); it != grid.at("approaches").end(); ++it) {
        auto spec = evalharness::ApproachSpec::make(it.key(), resolve_against(base, it.value().get<std::string>()));
        if (!fs::exists(spec.checkpoint / "manifest.json"))
            throw Error("checkpoint for '" + spec.name + "' not found: " + spec.checkpoint.string());
        specs.push_back(std::move(spec));
    }
    Evaluator ev(resolve_against(base, grid.at("entailment_ckpt")), resolve_against(base, grid.at("fluency_ckpt")),
                 metrics::BleuConfig::from_json(ctx.config.at("bleu")));
    const auto samples = corpus::load_samples(resolve_against(base, grid.at("samples")));
    const auto decode = decode_config(ctx, grid.value("decode", std::string()), "decode");
    const int budget = ctx.config.at("eval").at("response_budget").get<int>();

    std::map<std::string, std::vector<metrics::ScoreBreakdown>> all;
    const fs::path dir(out);
    for (const auto& spec : specs) {
        log("evaluating " + spec.name);
        auto run = evalharness::run_approach(spec, samples, ev.evaluator, decode, budget, ctx.seed_for("generate"));
        write_text(dir / "generations" / (spec.name + ".jsonl"), evalharness::serialize_generations(run.generations));
        write_text(dir / "scores" / (spec.name + ".jsonl"), metrics::serialize_scores(run.scores));
        all[spec.name] = std::move(run.scores);
    }
    std::optional<evalharness::HumanEvalSet> human;
    if (grid.contains("human_labels"))
        human = evalharness::load_human_labels(resolve_against(base, grid.at("human_labels")));
    const auto report = evalharness::build_report(all, human);
    write_json(dir / "report.json", evalharness::to_json(report));
    write_text(dir / "report.csv", evalharness::report_csv(report));
    write_text(dir / "report.md", evalharness::report_markdown(report));
    auto info = run_info(ctx);
    info["grid"] = grid;
    info["decode"] = decode.to_json();
    info["evaluator"] = ev.evaluator.describe();
    write_json(dir / "run_manifest.json", info);
}

void cmd_report(const Context& ctx, const std::string& scores_dir, const std::string& human_path,
                const std::string& out) {
    require(scores_dir, "--scores");
    require(out, "--out");
    std::optional<evalharness::HumanEvalSet> human;
    if (!human_path.empty()) {
        human = evalharness::load_human_labels(human_path);
        log("ingested " + std::to_string(human->records.size()) + " human label records");
    }
    const auto report = evalharness::build_report(evalharness::load_score_dir(scores_dir), human);
    const fs::path json_path(out);
    write_json(json_path, evalharness::to_json(report));
    auto stem = json_path;
    write_text(stem.replace_extension(".csv"), evalharness::report_csv(report));
    write_text(stem.replace_extension(".md"), evalharness::report_markdown(report));
    manifest_for_file(ctx, json_path);
}

int fail(const char* kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    return 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Contextual paraphrase generation toolkit", "ctxpara"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--seed", seed, "global seed; overrides the config");
    app.add_option("--out", out, "output file or directory");

    std::string input, corpus_path, train, validation, dev, test, ckpt, pairs, cases, samples, approach, decode,
        generations, ent_ckpt, flu_ckpt, sft_ckpt, grid, scores, human, recipe, domain = "in_domain";
    std::vector<std::string> sample_files;
    std::optional<int> steps;
    bool strict = false;

    auto* ingest = app.add_subcommand("ingest", "validate transcript JSONL into a normalized corpus");
    ingest->add_option("--input", input, "transcript JSONL")->required();
    ingest->add_flag("--strict", strict, "fail on the first malformed record");

    auto* build = app.add_subcommand("build-samples", "build samples, splits and entailment pairs");
    build->add_option("--corpus", corpus_path, "corpus JSONL")->required();

    auto* extract = app.add_subcommand("extract-controls", "attach control words to sample files");
    extract->add_option("--samples", sample_files, "sample JSONL files")->required();

    auto* sft = app.add_subcommand("train-sft", "supervised fine-tuning of the generator");
    sft->add_option("--train", train, "training samples")->required();
    sft->add_option("--validation", validation, "validation samples");
    sft->add_option("--recipe", recipe, "prompt recipe / approach name");
    sft->add_option("--steps", steps, "override sft.steps");

    auto* tent = app.add_subcommand("train-entailment", "train the context/response bi-encoder");
    tent->add_option("--train", train, "training pairs")->required();
    tent->add_option("--validation", validation, "validation pairs");

    auto* nuc = app.add_subcommand("eval-nuc", "next-utterance classification");
    nuc->add_option("--ckpt", ckpt, "encoder checkpoint")->required();
    nuc->add_option("--pairs", pairs, "pairs to build cases from");
    nuc->add_option("--cases", cases, "prebuilt NUC cases");

    auto* tflu = app.add_subcommand("train-fluency", "train the acceptability classifier");
    tflu->add_option("--train", train, "CoLA-format TSV")->required();
    tflu->add_option("--dev", dev, "CoLA-format TSV");

    auto* eflu = app.add_subcommand("eval-fluency", "MCC of the acceptability classifier");
    eflu->add_option("--ckpt", ckpt, "classifier checkpoint")->required();
    eflu->add_option("--test", test, "CoLA-format TSV")->required();
    eflu->add_option("--domain", domain, "in_domain, out_of_domain or unknown");

    auto* gen = app.add_subcommand("generate", "generate paraphrases for samples");
    gen->add_option("--ckpt", ckpt, "generator checkpoint")->required();
    gen->add_option("--samples", samples, "sample JSONL")->required();
    gen->add_option("--approach", approach, "approach name (default: from checkpoint)");
    gen->add_option("--decode", decode, "greedy or top_p=..,temperature=..,max_new_tokens=..");

    auto* score = app.add_subcommand("score", "score generations with the composite evaluator");
    score->add_option("--generations", generations, "generation JSONL")->required();
    score->add_option("--samples", samples, "sample JSONL")->required();
    score->add_option("--entailment-ckpt", ent_ckpt, "encoder checkpoint")->required();
    score->add_option("--fluency-ckpt", flu_ckpt, "classifier checkpoint")->required();

    auto* trl = app.add_subcommand("train-rl", "PPO fine-tuning against the composite reward");
    trl->add_option("--sft-ckpt", sft_ckpt, "initial policy")->required();
    trl->add_option("--samples", samples, "prompt samples")->required();
    trl->add_option("--entailment-ckpt", ent_ckpt, "encoder checkpoint")->required();
    trl->add_option("--fluency-ckpt", flu_ckpt, "classifier checkpoint")->required();

    auto* evaluate = app.add_subcommand("evaluate", "run an approach grid and write the report");
    evaluate->add_option("--grid", grid, "grid JSON")->required();

    auto* report = app.add_subcommand("report", "aggregate score files into a report");
    report->add_option("--scores", scores, "directory of <approach>.jsonl score files")->required();
    report->add_option("--human", human, "human label CSV");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    Context ctx;
    ctx.args = args;
    try {
        json given = json::object();
        if (!config_path.empty()) given = json::parse(read_file(config_path));
        ctx.config = resolve_config(given);
        ctx.seed = seed ? *seed : ctx.config.at("seed").get<std::uint64_t>();
        ctx.config["seed"] = ctx.seed;

        if (*ingest) {
            ctx.command = "ingest";
            cmd_ingest(ctx, input, out, strict);
        } else if (*build) {
            ctx.command = "build-samples";
            cmd_build_samples(ctx, corpus_path, out);
        } else if (*extract) {
            ctx.command = "extract-controls";
            cmd_extract_controls(ctx, sample_files, out);
        } else if (*sft) {
            ctx.command = "train-sft";
            cmd_train_sft(ctx, train, validation, out, recipe, steps);
        } else if (*tent) {
            ctx.command = "train-entailment";
            cmd_train_entailment(ctx, train, validation, out);
        } else if (*nuc) {
            ctx.command = "eval-nuc";
            cmd_eval_nuc(ctx, ckpt, pairs, cases, out);
        } else if (*tflu) {
            ctx.command = "train-fluency";
            cmd_train_fluency(ctx, train, dev, out);
        } else if (*eflu) {
            ctx.command = "eval-fluency";
            cmd_eval_fluency(ctx, ckpt, test, domain, out);
        } else if (*gen) {
            ctx.command = "generate";
            cmd_generate(ctx, ckpt, samples, approach, decode, out);
        } else if (*score) {
            ctx.command = "score";
            cmd_score(ctx, generations, samples, ent_ckpt, flu_ckpt, out);
        } else if (*trl) {
            ctx.command = "train-rl";
            cmd_train_rl(ctx, sft_ckpt, samples, ent_ckpt, flu_ckpt, out);
        } else if (*evaluate) {
            ctx.command = "evaluate";
            cmd_evaluate(ctx, grid, out);
        } else if (*report) {
            ctx.command = "report";
            cmd_report(ctx, scores, human, out);
        }
    } catch (const IngestionError& e) {
        return fail("ingestion", e.what());
    } catch (const ValidationError& e) {
        return fail("validation", e.what());
    } catch (const LengthError& e) {
        return fail("length", e.what());
    } catch (const TrainingError& e) {
        return fail("training", e.what());
    } catch (const metrics::ComponentError& e) {
        return fail("component", e.what());
    } catch (const json::exception& e) {
        return fail("json", e.what());
    } catch (const std::exception& e) {
        return fail("error", e.what());
    }
    return 0;
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return dispatch(args);
}

}  // namespace ctxpara::cli
