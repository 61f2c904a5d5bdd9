#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ctxpara/common.hpp"
#include "ctxpara/pos_tagger.hpp"

namespace ctxpara::controlwords {

/// Distinct control words in first-occurrence order, surface casing kept.
struct ControlWordSet {
    std::vector<std::string> words;
    std::string source_response_id;

    std::size_t size() const { return words.size(); }
    bool empty() const { return words.empty(); }
    bool contains(std::string_view w) const;
};

/// Auxiliary verbs (forms of be/have/do) never become control words.
bool is_auxiliary(std::string_view lower_word);

struct Extraction {
    ControlWordSet words;
    std::vector<TaggedToken> trace;
};

/// Nouns and non-auxiliary verbs of the response under `tagger`. Throws
/// ValidationError on an empty response and TaggingError if the tagger fails.
Extraction extract_with_trace(std::string_view response, const PosTagger& tagger);
ControlWordSet extract_control_words(std::string_view response, const PosTagger& tagger);

/// ceil(rate * n) words chosen uniformly without replacement; chosen words
/// keep their original relative order.
ControlWordSet sample_control_words(const ControlWordSet& set, double rate, Rng& rng);

/// round-half-up(fraction * n) positions replaced by uniform vocab draws.
/// A draw colliding with any original word or an earlier replacement is
/// redrawn up to kMaxRedraws times and then accepted.
ControlWordSet corrupt_control_words(const ControlWordSet& set, const std::vector<std::string>& vocab,
                                     double fraction, Rng& rng);

inline constexpr int kMaxRedraws = 100;

/// Uniformly random permutation of the set.
std::vector<std::string> order_for_prompt(const ControlWordSet& set, Rng& rng);

/// Distinct lowercase non-punctuation response tokens, sorted, for corruption draws.
std::vector<std::string> build_vocab(const std::vector<std::string>& responses);

}  // namespace ctxpara::controlwords
