#include "ctxpara/entailment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ctxpara/nn.hpp"

namespace ctxpara::entailment {

using nlohmann::json;

json EncoderConfig::to_json() const {
    return {{"dim", dim},
            {"buckets", buckets},
            {"bigrams", bigrams},
            {"pooling", pooling == Pooling::mean ? "mean" : "first_token"},
            {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
    EncoderConfig c;
    c.dim = j.value("dim", c.dim);
    c.buckets = j.value("buckets", c.buckets);
    c.bigrams = j.value("bigrams", c.bigrams);
    const auto pooling = j.value("pooling", std::string("mean"));
    if (pooling == "mean") c.pooling = Pooling::mean;
    else if (pooling == "first_token") c.pooling = Pooling::first_token;
    else throw ValidationError("unknown pooling '" + pooling + "'");
    c.seed = j.value("seed", c.seed);
    return c;
}

HashEncoder::HashEncoder(const EncoderConfig& config) : config_(config) {
    if (config.dim < 1 || config.buckets < 1) throw ValidationError("encoder dim and buckets must be positive");
    Rng rng(derive_seed(config.seed, "hash-encoder-init"));
    table_.resize(config.buckets, config.dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(config.dim));
    for (int r = 0; r < config.buckets; ++r)
        for (int c = 0; c < config.dim; ++c) table_(r, c) = rng.normal() * s;
}

int HashEncoder::bucket(std::string_view feature) const {
    return static_cast<int>(fnv1a64(feature) % static_cast<std::uint64_t>(config_.buckets));
}

std::vector<int> HashEncoder::features(std::string_view text) const {
    std::vector<std::string> words;
    for (auto& tok : word_punct_split(text)) {
        if (!is_punctuation_only(tok)) words.push_back(ascii_lower(tok));
    }
    std::vector<int> out{bucket("<bias>")};
    for (const auto& w : words) out.push_back(bucket("u:" + w));
    if (config_.bigrams) {
        for (std::size_t i = 1; i < words.size(); ++i) out.push_back(bucket("b:" + words[i - 1] + " " + words[i]));
    }
    return out;
}

Vector HashEncoder::embed(std::string_view text) const {
    if (trim(text).empty()) throw ValidationError("embed: text is empty");
    const auto feats = features(text);
    if (config_.pooling == Pooling::first_token) {
        return table_.row(feats.size() > 1 ? feats[1] : feats[0]).transpose();
    }
    Vector v = Vector::Zero(config_.dim);
    for (int f : feats) v += table_.row(f).transpose();
    return v / static_cast<double>(feats.size());
}

void HashEncoder::backprop(std::string_view text, const Vector& grad_embedding, Matrix& grad_table) const {
    const auto feats = features(text);
    if (config_.pooling == Pooling::first_token) {
        grad_table.row(feats.size() > 1 ? feats[1] : feats[0]) += grad_embedding.transpose();
        return;
    }
    const double w = 1.0 / static_cast<double>(feats.size());
    for (int f : feats) grad_table.row(f) += w * grad_embedding.transpose();
}

void HashEncoder::save(const std::filesystem::path& dir, const json& extra) const {
    std::filesystem::create_directories(dir);
    std::vector<nn::Parameter> params{{"table", nn::constant(table_)}};
    nn::save_parameters(dir / "weights.bin", params);
    json manifest = {{"kind", "sentence_encoder"},
                     {"backend", "hash-ngram"},
                     {"encoder", config_.to_json()},
                     {"code_version", code_version()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

HashEncoder HashEncoder::load(const std::filesystem::path& dir) {
    const auto manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("kind", "") != "sentence_encoder") throw Error("not an encoder checkpoint: " + dir.string());
    HashEncoder enc(EncoderConfig::from_json(manifest.at("encoder")));
    std::vector<nn::Parameter> params{{"table", nn::constant(enc.table_)}};
    nn::load_parameters(dir / "weights.bin", params);
    enc.table_ = params[0].var->value;
    return enc;
}

double cosine(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double entailment_score(const SentenceEncoder& encoder, std::string_view context, std::string_view response) {
    if (trim(context).empty() || trim(response).empty()) throw ValidationError("entailment_score: empty input");
    return (1.0 + cosine(encoder.embed(context), encoder.embed(response))) / 2.0;
}

namespace {

// Row-normalizes m; returns the row norms.
Vector normalize_rows(const Matrix& m, Matrix& out) {
    Vector norms = m.rowwise().norm();
    out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (norms(i) > 0.0) out.row(i) /= norms(i);
    }
    return norms;
}

// Gradient through x / ||x|| given the gradient at the normalized row.
Matrix unnormalize_grad(const Matrix& normalized, const Vector& norms, const Matrix& grad_normalized) {
    Matrix g(grad_normalized.rows(), grad_normalized.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if (norms(i) == 0.0) {
            g.row(i).setZero();
            continue;
        }
        const double proj = normalized.row(i).dot(grad_normalized.row(i));
        g.row(i) = (grad_normalized.row(i) - proj * normalized.row(i)) / norms(i);
    }
    return g;
}

}  // namespace

double mnr_loss(const Matrix& contexts, const Matrix& responses, double scale, Matrix* grad_contexts,
                Matrix* grad_responses) {
    const auto B = contexts.rows();
    if (B < 2) throw ValidationError("mnr_loss needs a batch of at least 2 pairs");
    if (responses.rows() != B || responses.cols() != contexts.cols()) throw ValidationError("mnr_loss: shape mismatch");
    if (!(scale > 0.0)) throw ValidationError("mnr_loss: scale must be positive");

    Matrix cn, rn;
    const Vector c_norm = normalize_rows(contexts, cn);
    const Vector r_norm = normalize_rows(responses, rn);
    const Matrix S = scale * cn * rn.transpose();
    Matrix P(B, B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const double mx = S.row(i).maxCoeff();
        const double lse = mx + std::log((S.row(i).array() - mx).exp().sum());
        loss += lse - S(i, i);
        P.row(i) = (S.row(i).array() - lse).exp();
    }
    loss /= static_cast<double>(B);

    if (grad_contexts || grad_responses) {
        Matrix dS = P;
        dS.diagonal().array() -= 1.0;
        dS /= static_cast<double>(B);
        if (grad_contexts) *grad_contexts = unnormalize_grad(cn, c_norm, scale * dS * rn);
        if (grad_responses) *grad_responses = unnormalize_grad(rn, r_norm, scale * dS.transpose() * cn);
    }
    return loss;
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"scale", scale},
            {"seed", seed},
            {"encoder", encoder.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.scale = j.value("scale", c.scale);
    c.seed = j.value("seed", c.seed);
    if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
    return c;
}

TrainResult train_entailment(HashEncoder& encoder, const std::vector<corpus::EntailmentPair>& pairs,
                             const TrainConfig& config) {
    if (config.batch_size < 2) throw ValidationError("batch_size must be >= 2");
    if (config.epochs < 0) throw ValidationError("epochs must be >= 0");
    if (pairs.size() < 2 * static_cast<std::size_t>(config.batch_size))
        throw ValidationError("train_entailment needs at least 2 * batch_size pairs");

    std::vector<nn::Parameter> params{{"table", nn::parameter(encoder.table())}};
    nn::Adam adam({config.learning_rate, 0.9, 0.999, 1e-8, 0.0});
    Rng rng(derive_seed(config.seed, "entailment-order"));
    TrainResult result;
    std::vector<std::size_t> order(pairs.size());
    const auto dim = encoder.embed_dim();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (std::size_t start = 0; start + 2 <= order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const auto B = static_cast<Eigen::Index>(end - start);
            if (B < 2) break;
            Matrix C(B, dim), R(B, dim);
            for (Eigen::Index i = 0; i < B; ++i) {
                const auto& p = pairs[order[start + static_cast<std::size_t>(i)]];
                C.row(i) = encoder.embed(p.context_text).transpose();
                R.row(i) = encoder.embed(p.response_text).transpose();
            }
            Matrix dC, dR;
            const double loss = mnr_loss(C, R, config.scale, &dC, &dR);
            if (!is_finite(loss)) {
                throw TrainingError("non-finite MNR loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                    std::to_string(start));
            }
            result.loss_curve.push_back(loss);
            Matrix grad = Matrix::Zero(encoder.table().rows(), encoder.table().cols());
            for (Eigen::Index i = 0; i < B; ++i) {
                const auto& p = pairs[order[start + static_cast<std::size_t>(i)]];
                encoder.backprop(p.context_text, dC.row(i).transpose(), grad);
                encoder.backprop(p.response_text, dR.row(i).transpose(), grad);
            }
            params[0].var->value = encoder.table();
            params[0].var->grad = grad;
            adam.step(params);
            encoder.table() = params[0].var->value;
        }
    }
    return result;
}

double in_batch_accuracy(const SentenceEncoder& encoder, const std::vector<corpus::EntailmentPair>& pairs,
                         int batch_size) {
    if (pairs.empty() || batch_size < 1) return 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<Vector> responses;
        for (std::size_t j = start; j < end; ++j) responses.push_back(encoder.embed(pairs[j].response_text));
        for (std::size_t i = start; i < end; ++i) {
            const Vector c = encoder.embed(pairs[i].context_text);
            std::size_t best = start;
            double best_score = -2.0;
            for (std::size_t j = start; j < end; ++j) {
                const double s = cosine(c, responses[j - start]);
                if (s > best_score) {
                    best_score = s;
                    best = j;
                }
            }
            if (best == i) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

NucMetrics evaluate_nuc(const PairScorer& scorer, const std::vector<NucCase>& cases) {
    NucMetrics m;
    for (const auto& c : cases) {
        const double true_score = scorer(c.context, c.response);
        std::size_t rank = 1;
        for (const auto& d : c.distractors) {
            if (scorer(c.context, d) >= true_score) ++rank;
        }
        if (rank == 1) m.r_at_1 += 1.0;
        if (rank <= 2) m.r_at_2 += 1.0;
        m.mrr += 1.0 / static_cast<double>(rank);
    }
    m.cases = cases.size();
    if (!cases.empty()) {
        const double n = static_cast<double>(cases.size());
        m.r_at_1 /= n;
        m.r_at_2 /= n;
        m.mrr /= n;
    }
    return m;
}

NucMetrics evaluate_nuc(const SentenceEncoder& encoder, const std::vector<NucCase>& cases) {
    return evaluate_nuc(
        [&encoder](const std::string& ctx, const std::string& resp) { return entailment_score(encoder, ctx, resp); },
        cases);
}

std::vector<NucCase> build_nuc_cases(const std::vector<corpus::EntailmentPair>& pairs, std::uint64_t seed,
                                     std::size_t n_distractors) {
    std::set<std::string> distinct;
    for (const auto& p : pairs) distinct.insert(p.response_text);
    if (distinct.size() < n_distractors + 1)
        throw ValidationError("build_nuc_cases needs at least " + std::to_string(n_distractors + 1) +
                              " distinct responses");
    Rng rng(derive_seed(seed, "nuc-distractors"));
    std::vector<NucCase> cases;
    for (const auto& p : pairs) {
        NucCase c{p.context_text, p.response_text, {}};
        std::set<std::string> used{p.response_text};
        while (c.distractors.size() < n_distractors) {
            const auto& cand = pairs[rng.uniform_index(pairs.size())].response_text;
            if (used.insert(cand).second) c.distractors.push_back(cand);
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<NucCase> load_nuc_cases(const std::filesystem::path& path) {
    std::vector<NucCase> cases;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            NucCase c{j.at("context").get<std::string>(), j.at("response").get<std::string>(),
                      j.at("distractors").get<std::vector<std::string>>()};
            if (c.distractors.size() != 9) throw IngestionError(n, "NUC case must have exactly 9 distractors");
            if (std::find(c.distractors.begin(), c.distractors.end(), c.response) != c.distractors.end())
                throw IngestionError(n, "NUC case lists its true response among the distractors");
            cases.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw IngestionError(n, path.string() + ": " + e.what());
        }
    }
    return cases;
}

void save_nuc_cases(const std::filesystem::path& path, const std::vector<NucCase>& cases) {
    std::string out;
    for (const auto& c : cases) {
        out += json{{"context", c.context}, {"response", c.response}, {"distractors", c.distractors}}.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace ctxpara::entailment
