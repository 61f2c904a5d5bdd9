#include "ctxpara/controlwords.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ctxpara::controlwords {

bool ControlWordSet::contains(std::string_view w) const {
    return std::find(words.begin(), words.end(), w) != words.end();
}

bool is_auxiliary(std::string_view w) {
    static const std::set<std::string_view> aux = {"be",   "am",     "is",  "are",  "was",  "were",  "been",
                                                   "being", "have",  "has", "had",  "having", "do",  "does",
                                                   "did",  "done",   "doing", "'s", "'re", "'ve", "'m"};
    return aux.count(w) > 0;
}

Extraction extract_with_trace(std::string_view response, const PosTagger& tagger) {
    if (trim(response).empty()) throw ValidationError("extract_control_words: response is empty");
    Extraction out;
    out.trace = tagger.tag(response);
    for (const auto& tok : out.trace) {
        if (is_punctuation_only(tok.text)) continue;
        const bool noun = is_noun_tag(tok.tag);
        const bool verb = is_verb_tag(tok.tag) && !is_auxiliary(ascii_lower(tok.text));
        if ((noun || verb) && !out.words.contains(tok.text)) out.words.words.push_back(tok.text);
    }
    return out;
}

ControlWordSet extract_control_words(std::string_view response, const PosTagger& tagger) {
    return extract_with_trace(response, tagger).words;
}

namespace {

// k distinct indices out of n, returned in ascending order.
std::vector<std::size_t> choose_indices(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

ControlWordSet sample_control_words(const ControlWordSet& set, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("sampling rate must be in [0, 1]");
    const std::size_t n = set.size();
    // The epsilon absorbs representation error, e.g. 0.6 * 5.
    const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
    ControlWordSet out{{}, set.source_response_id};
    for (auto i : choose_indices(n, std::min(k, n), rng)) out.words.push_back(set.words[i]);
    return out;
}

ControlWordSet corrupt_control_words(const ControlWordSet& set, const std::vector<std::string>& vocab,
                                     double fraction, Rng& rng) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("corruption fraction must be in [0, 1]");
    if (set.empty()) return set;
    if (vocab.empty()) throw ValidationError("corrupt_control_words: vocabulary is empty");
    const std::size_t n = set.size();
    const auto k = std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5)));
    ControlWordSet out = set;
    std::set<std::string> taken(set.words.begin(), set.words.end());
    for (auto i : choose_indices(n, k, rng)) {
        std::string draw;
        for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
            draw = vocab[rng.uniform_index(vocab.size())];
            if (!taken.count(draw)) break;
        }
        taken.insert(draw);
        out.words[i] = std::move(draw);
    }
    return out;
}

std::vector<std::string> order_for_prompt(const ControlWordSet& set, Rng& rng) {
    auto words = set.words;
    rng.shuffle(words);
    return words;
}

std::vector<std::string> build_vocab(const std::vector<std::string>& responses) {
    std::set<std::string> words;
    for (const auto& r : responses) {
        for (const auto& tok : word_punct_split(r)) {
            if (!is_punctuation_only(tok)) words.insert(ascii_lower(tok));
        }
    }
    return {words.begin(), words.end()};
}

}  // namespace ctxpara::controlwords
