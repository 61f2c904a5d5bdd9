#include "ctxpara/fluency.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "ctxpara/nn.hpp"

namespace ctxpara::fluency {

using nlohmann::json;

std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::in_domain: return "in_domain";
        case Domain::out_of_domain: return "out_of_domain";
        default: return "unknown";
    }
}

Domain parse_domain(std::string_view s) {
    if (s == "in_domain") return Domain::in_domain;
    if (s == "out_of_domain") return Domain::out_of_domain;
    if (s == "unknown") return Domain::unknown;
    throw ValidationError("unknown domain '" + std::string(s) + "'");
}

std::vector<AcceptabilityExample> parse_cola_tsv(std::istream& in, Domain domain) {
    std::vector<AcceptabilityExample> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (int i = 0; i < 3; ++i) {
            const auto tab = line.find('\t', start);
            if (tab == std::string::npos) throw IngestionError(row, "expected 4 tab-separated columns");
            cols.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        cols.push_back(line.substr(start));
        const auto label = trim(cols[1]);
        if (label != "0" && label != "1") throw IngestionError(row, "label must be 0 or 1, got '" + label + "'");
        auto text = trim(cols[3]);
        if (text.empty()) throw IngestionError(row, "empty sentence");
        if (!is_valid_utf8(text)) throw IngestionError(row, "sentence is not valid UTF-8");
        out.push_back({std::move(text), label == "1", domain});
    }
    return out;
}

std::vector<AcceptabilityExample> load_cola_tsv(const std::filesystem::path& path, Domain domain) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_cola_tsv(in, domain);
}

json FluencyConfig::to_json() const {
    return {{"buckets", buckets}, {"bigrams", bigrams}, {"steps", steps},
            {"learning_rate", learning_rate}, {"l2", l2}, {"seed", seed}};
}

FluencyConfig FluencyConfig::from_json(const json& j) {
    FluencyConfig c;
    c.buckets = j.value("buckets", c.buckets);
    c.bigrams = j.value("bigrams", c.bigrams);
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.l2 = j.value("l2", c.l2);
    c.seed = j.value("seed", c.seed);
    return c;
}

double sigmoid(double logit) {
    if (logit >= 0) return 1.0 / (1.0 + std::exp(-logit));
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

LogisticFluencyModel::LogisticFluencyModel(const FluencyConfig& config) : config_(config) {
    if (config.buckets < 1) throw ValidationError("buckets must be positive");
    weights_ = Eigen::VectorXd::Zero(config.buckets);
}

std::vector<LogisticFluencyModel::Feature> LogisticFluencyModel::features(std::string_view text) const {
    const auto b = [this](const std::string& f) {
        return static_cast<int>(fnv1a64(f) % static_cast<std::uint64_t>(config_.buckets));
    };
    std::vector<std::string> words{"<s>"};
    for (auto& tok : word_punct_split(text)) words.push_back(ascii_lower(tok));
    words.push_back("</s>");
    std::map<int, double> counts;
    counts[b("<bias>")] += 1.0;
    for (std::size_t i = 1; i + 1 < words.size(); ++i) counts[b("u:" + words[i])] += 1.0;
    if (config_.bigrams) {
        for (std::size_t i = 1; i < words.size(); ++i) counts[b("b:" + words[i - 1] + " " + words[i])] += 1.0;
    }
    double total = 0.0;
    for (auto& [k, v] : counts) total += v;
    const double norm = 1.0 / std::sqrt(total);
    std::vector<Feature> out;
    for (auto& [k, v] : counts) out.push_back({k, v * norm});
    return out;
}

double LogisticFluencyModel::logit(std::string_view text) const {
    if (trim(text).empty()) throw ValidationError("fluency: text is empty");
    double z = 0.0;
    for (const auto& f : features(text)) z += weights_(f.bucket) * f.value;
    return z;
}

double LogisticFluencyModel::probability(std::string_view text) const { return sigmoid(logit(text)); }

void LogisticFluencyModel::save(const std::filesystem::path& dir, const json& extra) const {
    std::filesystem::create_directories(dir);
    std::vector<nn::Parameter> params{{"weights", nn::constant(weights_)}};
    nn::save_parameters(dir / "weights.bin", params);
    json manifest = {{"kind", "fluency_classifier"},
                     {"backend", "hashed-logistic"},
                     {"fluency", config_.to_json()},
                     {"code_version", code_version()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

LogisticFluencyModel LogisticFluencyModel::load(const std::filesystem::path& dir) {
    const auto manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("kind", "") != "fluency_classifier")
        throw Error("not a fluency checkpoint: " + dir.string());
    LogisticFluencyModel model(FluencyConfig::from_json(manifest.at("fluency")));
    std::vector<nn::Parameter> params{{"weights", nn::constant(model.weights_)}};
    nn::load_parameters(dir / "weights.bin", params);
    model.weights_ = params[0].var->value.col(0);
    return model;
}

FluencyTrainResult train_fluency(LogisticFluencyModel& model, const std::vector<AcceptabilityExample>& train) {
    bool pos = false, neg = false;
    for (const auto& ex : train) (ex.acceptable ? pos : neg) = true;
    if (!pos || !neg) throw ValidationError("train_fluency needs both acceptable and unacceptable examples");
    const auto& cfg = model.config();
    if (cfg.steps < 0) throw ValidationError("steps must be >= 0");

    std::vector<std::vector<LogisticFluencyModel::Feature>> feats;
    feats.reserve(train.size());
    for (const auto& ex : train) feats.push_back(model.features(ex.text));

    std::vector<nn::Parameter> params{{"weights", nn::parameter(model.weights())}};
    nn::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, 0.0});
    const double n = static_cast<double>(train.size());
    FluencyTrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        const Eigen::VectorXd& w = params[0].var->value;
        Eigen::VectorXd grad = cfg.l2 * w;
        double loss = 0.5 * cfg.l2 * w.squaredNorm();
        for (std::size_t i = 0; i < train.size(); ++i) {
            double z = 0.0;
            for (const auto& f : feats[i]) z += w(f.bucket) * f.value;
            const double y = train[i].acceptable ? 1.0 : 0.0;
            // log(1 + e^z) - y z, computed stably
            loss += ((z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z) / n;
            const double g = (sigmoid(z) - y) / n;
            for (const auto& f : feats[i]) grad(f.bucket) += g * f.value;
        }
        if (!is_finite(loss)) throw TrainingError("non-finite fluency loss at step " + std::to_string(step));
        result.loss_curve.push_back(loss);
        params[0].var->grad = grad;
        adam.step(params);
    }
    model.weights() = params[0].var->value.col(0);
    return result;
}

double mcc(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
    if (predictions.size() != labels.size()) throw ValidationError("mcc: predictions and labels differ in length");
    if (predictions.empty()) throw ValidationError("mcc: empty input");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] && labels[i]) ++tp;
        else if (!predictions[i] && !labels[i]) ++tn;
        else if (predictions[i]) ++fp;
        else ++fn;
    }
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

FluencyEval evaluate_fluency(const AcceptabilityClassifier& model, const std::vector<AcceptabilityExample>& data) {
    if (data.empty()) throw ValidationError("evaluate_fluency: no examples");
    std::vector<bool> pred, gold;
    std::size_t correct = 0;
    for (const auto& ex : data) {
        const bool p = model.probability(ex.text) >= 0.5;
        pred.push_back(p);
        gold.push_back(ex.acceptable);
        if (p == ex.acceptable) ++correct;
    }
    return {mcc(pred, gold), static_cast<double>(correct) / static_cast<double>(data.size()), data.size()};
}

}  // namespace ctxpara::fluency
