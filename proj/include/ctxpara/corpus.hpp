#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxpara/tokenizer.hpp"

namespace ctxpara::corpus {

enum class Speaker { agent, customer };

std::string_view to_string(Speaker s);
std::optional<Speaker> parse_speaker(std::string_view s);

struct Turn {
    Speaker speaker;
    std::string text;
    std::size_t index;
};

struct Conversation {
    std::string id;
    std::vector<Turn> turns;
};

/// Speaker-prefixed rendering used whenever a turn becomes prompt text,
/// e.g. "customer: where is my order".
std::string prefixed(const Turn& turn);
std::string prefixed(Speaker speaker, std::string_view text);

struct IngestIssue {
    std::size_t line;
    std::string message;
};

struct IngestSummary {
    std::size_t records = 0;
    std::size_t conversations = 0;
    std::size_t turns = 0;
    std::size_t dropped_empty_turns = 0;
    std::vector<IngestIssue> errors;
    std::vector<IngestIssue> warnings;
};

/// Immutable set of validated conversations.
class Corpus {
  public:
    Corpus() = default;
    Corpus(std::vector<Conversation> conversations, IngestSummary summary)
        : conversations_(std::move(conversations)), summary_(std::move(summary)) {}

    const std::vector<Conversation>& conversations() const { return conversations_; }
    const IngestSummary& summary() const { return summary_; }
    std::size_t size() const { return conversations_.size(); }
    bool empty() const { return conversations_.empty(); }

  private:
    std::vector<Conversation> conversations_;
    IngestSummary summary_;
};

struct IngestOptions {
    /// When false, the first malformed record throws IngestionError.
    bool skip_malformed = true;
};

/// Reads transcript JSONL, one conversation per line. Malformed records are
/// reported in the summary (or thrown, see IngestOptions). Throws Error on
/// an input with no records at all.
Corpus ingest_transcripts(std::istream& in, const IngestOptions& options = {});
Corpus ingest_transcripts_file(const std::filesystem::path& path, const IngestOptions& options = {});

/// Validates one record and returns the conversation. Throws IngestionError.
Conversation parse_transcript_record(std::string_view line, std::size_t line_number, IngestSummary& summary);

std::string serialize_transcripts(const Corpus& corpus);

struct Sample {
    std::string id;
    std::string conversation_id;
    std::vector<Turn> context;
    std::vector<std::string> control_words;
    std::string response;
    /// Position of the response within its conversation.
    std::size_t response_index = 0;

    std::vector<std::string> prefixed_context() const;
};

struct SampleOptions {
    std::size_t window = 6;
    std::size_t max_context_tokens = 512;
};

/// One sample per agent turn with at least one preceding turn. Context is the
/// window of turns before the response; turns are dropped oldest-first and
/// then the oldest survivor is cut from its start until the prefixed context
/// fits max_context_tokens.
std::vector<Sample> build_samples(const Corpus& corpus, const SampleOptions& options, const Tokenizer& tokenizer);

/// Total token count of the prefixed context under the tokenizer.
std::size_t context_tokens(const Sample& sample, const Tokenizer& tokenizer);

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> validation;
};

/// Conversation-level partition. round(train_fraction * n) conversations go to
/// train, clamped so both sides keep at least one conversation.
Split split(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed);

struct EntailmentPair {
    std::string context_text;
    std::string response_text;
    std::string conversation_id;
};

/// Flattened context: prefixed turns joined by a single space.
std::string flatten_context(const std::vector<Turn>& context);

std::vector<EntailmentPair> build_entailment_pairs(const Corpus& corpus, std::size_t window = 6);
std::vector<EntailmentPair> entailment_pairs_from_samples(const std::vector<Sample>& samples);

nlohmann::json to_json(const Sample& sample);
Sample sample_from_json(const nlohmann::json& j);
std::string serialize_samples(const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);

nlohmann::json to_json(const EntailmentPair& pair);
std::vector<EntailmentPair> load_pairs(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const std::vector<EntailmentPair>& pairs);

}  // namespace ctxpara::corpus
