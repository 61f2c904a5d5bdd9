#include "ctxpara/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ctxpara/common.hpp"

namespace ctxpara::corpus {

using nlohmann::json;

std::string_view to_string(Speaker s) { return s == Speaker::agent ? "agent" : "customer"; }

std::optional<Speaker> parse_speaker(std::string_view s) {
    if (s == "agent") return Speaker::agent;
    if (s == "customer") return Speaker::customer;
    return std::nullopt;
}

std::string prefixed(Speaker speaker, std::string_view text) {
    std::string out(to_string(speaker));
    out += ": ";
    out += text;
    return out;
}

std::string prefixed(const Turn& turn) { return prefixed(turn.speaker, turn.text); }

Conversation parse_transcript_record(std::string_view line, std::size_t line_number, IngestSummary& summary) {
    json record;
    try {
        record = json::parse(line);
    } catch (const json::parse_error& e) {
        throw IngestionError(line_number, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw IngestionError(line_number, "record is not an object");
    if (!record.contains("id")) throw IngestionError(line_number, "missing field 'id'");
    if (!record["id"].is_string()) throw IngestionError(line_number, "field 'id' must be a string");
    if (!record.contains("turns")) throw IngestionError(line_number, "missing field 'turns'");
    if (!record["turns"].is_array()) throw IngestionError(line_number, "field 'turns' must be an array");

    Conversation conv;
    conv.id = record["id"].get<std::string>();
    if (conv.id.empty()) throw IngestionError(line_number, "field 'id' is empty");

    std::size_t position = 0;
    for (const auto& t : record["turns"]) {
        const std::string where = "turns[" + std::to_string(position) + "]";
        ++position;
        if (!t.is_object()) throw IngestionError(line_number, where + " is not an object");
        if (!t.contains("speaker")) throw IngestionError(line_number, where + " missing field 'speaker'");
        if (!t.contains("text")) throw IngestionError(line_number, where + " missing field 'text'");
        if (!t["speaker"].is_string()) throw IngestionError(line_number, where + " field 'speaker' must be a string");
        if (!t["text"].is_string()) throw IngestionError(line_number, where + " field 'text' must be a string");
        auto speaker = parse_speaker(t["speaker"].get<std::string>());
        if (!speaker)
            throw IngestionError(line_number, where + " field 'speaker' must be \"agent\" or \"customer\"");
        auto text = collapse_whitespace(t["text"].get<std::string>());
        if (!is_valid_utf8(text)) throw IngestionError(line_number, where + " field 'text' is not valid UTF-8");
        if (text.empty()) {
            ++summary.dropped_empty_turns;
            summary.warnings.push_back({line_number, where + " is empty after whitespace normalization; dropped"});
            continue;
        }
        conv.turns.push_back(Turn{*speaker, std::move(text), conv.turns.size()});
    }
    if (conv.turns.size() < 2) throw IngestionError(line_number, "conversation '" + conv.id + "' has fewer than 2 turns");
    const bool has_agent = std::any_of(conv.turns.begin(), conv.turns.end(),
                                       [](const Turn& t) { return t.speaker == Speaker::agent; });
    if (!has_agent) throw IngestionError(line_number, "conversation '" + conv.id + "' has no agent turn");
    return conv;
}

Corpus ingest_transcripts(std::istream& in, const IngestOptions& options) {
    IngestSummary summary;
    std::vector<Conversation> conversations;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++summary.records;
        try {
            auto conv = parse_transcript_record(line, line_number, summary);
            if (!seen_ids.insert(conv.id).second)
                throw IngestionError(line_number, "duplicate conversation id '" + conv.id + "'");
            summary.turns += conv.turns.size();
            conversations.push_back(std::move(conv));
        } catch (const IngestionError& e) {
            if (!options.skip_malformed) throw;
            summary.errors.push_back({e.line(), e.what()});
        }
    }
    if (summary.records == 0) throw Error("empty corpus: no transcript records in input");
    summary.conversations = conversations.size();
    return Corpus(std::move(conversations), std::move(summary));
}

Corpus ingest_transcripts_file(const std::filesystem::path& path, const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return ingest_transcripts(in, options);
}

std::string serialize_transcripts(const Corpus& corpus) {
    std::string out;
    for (const auto& conv : corpus.conversations()) {
        json turns = json::array();
        for (const auto& t : conv.turns) turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
        json record = {{"id", conv.id}, {"turns", std::move(turns)}};
        out += record.dump();
        out += '\n';
    }
    return out;
}

std::vector<std::string> Sample::prefixed_context() const {
    std::vector<std::string> out;
    out.reserve(context.size());
    for (const auto& t : context) out.push_back(prefixed(t));
    return out;
}

std::size_t context_tokens(const Sample& sample, const Tokenizer& tokenizer) {
    std::size_t total = 0;
    for (const auto& t : sample.context) total += tokenizer.count(prefixed(t));
    return total;
}

namespace {

std::vector<Turn> fit_context(std::vector<Turn> context, std::size_t max_tokens, const Tokenizer& tokenizer) {
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    for (const auto& t : context) {
        counts.push_back(tokenizer.count(prefixed(t)));
        total += counts.back();
    }
    std::size_t first = 0;
    // Drop whole turns while the rest alone still overflows.
    while (first < context.size() && total - counts[first] > max_tokens) {
        total -= counts[first];
        ++first;
    }
    context.erase(context.begin(), context.begin() + static_cast<std::ptrdiff_t>(first));
    if (total <= max_tokens || context.empty()) return context;

    // The oldest survivor is cut from its start.
    auto& oldest = context.front();
    const std::size_t prefix_tokens = tokenizer.count(prefixed(oldest.speaker, ""));
    const std::size_t rest = total - counts[first];
    const std::size_t budget = max_tokens - rest;
    if (budget <= prefix_tokens) {
        context.erase(context.begin());
        return context;
    }
    auto pieces = tokenizer.pieces(oldest.text);
    const std::size_t keep = budget - prefix_tokens;
    std::vector<std::string> tail(pieces.end() - static_cast<std::ptrdiff_t>(keep), pieces.end());
    oldest.text = tokenizer.join_pieces(tail);
    return context;
}

}  // namespace

std::vector<Sample> build_samples(const Corpus& corpus, const SampleOptions& options, const Tokenizer& tokenizer) {
    if (options.window < 1) throw ValidationError("window must be >= 1");
    if (options.max_context_tokens < 1) throw ValidationError("max_context_tokens must be >= 1");
    std::vector<Sample> samples;
    for (const auto& conv : corpus.conversations()) {
        for (std::size_t i = 1; i < conv.turns.size(); ++i) {
            if (conv.turns[i].speaker != Speaker::agent) continue;
            const std::size_t begin = i > options.window ? i - options.window : 0;
            std::vector<Turn> context(conv.turns.begin() + static_cast<std::ptrdiff_t>(begin),
                                      conv.turns.begin() + static_cast<std::ptrdiff_t>(i));
            Sample s;
            s.id = conv.id + "#" + std::to_string(i);
            s.conversation_id = conv.id;
            s.context = fit_context(std::move(context), options.max_context_tokens, tokenizer);
            s.response = conv.turns[i].text;
            s.response_index = i;
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

Split split(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must be in (0, 1)");
    std::set<std::string> id_set;
    for (const auto& s : samples) id_set.insert(s.conversation_id);
    if (id_set.size() < 2) throw ValidationError("split needs at least 2 conversations");

    std::vector<std::string> ids(id_set.begin(), id_set.end());
    Rng rng(seed);
    rng.shuffle(ids);
    const auto n = ids.size();
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::set<std::string> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));

    Split out;
    for (const auto& s : samples) {
        (train_ids.count(s.conversation_id) ? out.train : out.validation).push_back(s);
    }
    return out;
}

std::string flatten_context(const std::vector<Turn>& context) {
    std::vector<std::string> parts;
    for (const auto& t : context) parts.push_back(prefixed(t));
    return join(parts, " ");
}

std::vector<EntailmentPair> build_entailment_pairs(const Corpus& corpus, std::size_t window) {
    if (corpus.empty()) throw ValidationError("build_entailment_pairs: corpus is empty");
    std::vector<EntailmentPair> pairs;
    for (const auto& conv : corpus.conversations()) {
        for (std::size_t i = 1; i < conv.turns.size(); ++i) {
            if (conv.turns[i].speaker != Speaker::agent) continue;
            const std::size_t begin = i > window ? i - window : 0;
            std::vector<Turn> context(conv.turns.begin() + static_cast<std::ptrdiff_t>(begin),
                                      conv.turns.begin() + static_cast<std::ptrdiff_t>(i));
            pairs.push_back({flatten_context(context), conv.turns[i].text, conv.id});
        }
    }
    return pairs;
}

std::vector<EntailmentPair> entailment_pairs_from_samples(const std::vector<Sample>& samples) {
    std::vector<EntailmentPair> pairs;
    for (const auto& s : samples) {
        if (s.context.empty()) continue;
        pairs.push_back({flatten_context(s.context), s.response, s.conversation_id});
    }
    return pairs;
}

json to_json(const Sample& sample) {
    return {{"id", sample.id},
            {"conversation_id", sample.conversation_id},
            {"context", sample.prefixed_context()},
            {"control_words", sample.control_words},
            {"response", sample.response}};
}

Sample sample_from_json(const json& j) {
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.conversation_id = j.at("conversation_id").get<std::string>();
    s.response = j.at("response").get<std::string>();
    s.control_words = j.at("control_words").get<std::vector<std::string>>();
    std::size_t index = 0;
    for (const auto& line : j.at("context")) {
        const auto text = line.get<std::string>();
        Turn t{Speaker::customer, {}, index++};
        bool matched = false;
        for (Speaker sp : {Speaker::agent, Speaker::customer}) {
            const auto prefix = prefixed(sp, "");
            if (text.rfind(prefix, 0) == 0) {
                t.speaker = sp;
                t.text = text.substr(prefix.size());
                matched = true;
                break;
            }
        }
        if (!matched) throw Error("sample '" + s.id + "': context entry lacks a speaker prefix");
        s.context.push_back(std::move(t));
    }
    s.response_index = index;
    return s;
}

std::string serialize_samples(const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += to_json(s).dump();
        out += '\n';
    }
    return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
    std::vector<Sample> samples;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            samples.push_back(sample_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw IngestionError(n, path.string() + ": " + e.what());
        }
    }
    return samples;
}

void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    write_file_atomic(path, serialize_samples(samples));
}

json to_json(const EntailmentPair& pair) {
    return {{"context", pair.context_text}, {"response", pair.response_text}, {"conversation_id", pair.conversation_id}};
}

std::vector<EntailmentPair> load_pairs(const std::filesystem::path& path) {
    std::vector<EntailmentPair> pairs;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            pairs.push_back({j.at("context").get<std::string>(), j.at("response").get<std::string>(),
                             j.value("conversation_id", std::string())});
        } catch (const json::exception& e) {
            throw IngestionError(n, path.string() + ": " + e.what());
        }
    }
    return pairs;
}

void save_pairs(const std::filesystem::path& path, const std::vector<EntailmentPair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += to_json(p).dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace ctxpara::corpus
