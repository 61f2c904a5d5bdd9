#include "ctxpara/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "ctxpara/common.hpp"

namespace ctxpara {

namespace {

constexpr std::array<std::string_view, 5> kSpecials = {special::kEndOfText, special::kUnknown,
                                                       special::kContextControl, special::kControlWord,
                                                       special::kResponse};

bool attaches_left(const std::string& piece) {
    return piece.size() == 1 && std::string_view(",.!?;:)%").find(piece[0]) != std::string_view::npos;
}

}  // namespace

Vocabulary::Vocabulary() {
    for (auto s : kSpecials) add(std::string(s));
}

void Vocabulary::add(std::string piece) {
    if (index_.count(piece)) return;
    index_.emplace(piece, static_cast<TokenId>(pieces_.size()));
    pieces_.push_back(std::move(piece));
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& tokenized, std::size_t min_count,
                             std::size_t max_words) {
    std::map<std::string, std::size_t> counts;
    for (const auto& seq : tokenized) {
        for (const auto& p : seq) ++counts[p];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary vocab;
    for (const auto& [word, count] : ranked) {
        if (vocab.size() - kSpecialCount >= max_words) break;
        if (count < min_count) break;
        vocab.add(word);
    }
    return vocab;
}

TokenId Vocabulary::id_of(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    return it == index_.end() ? unknown() : it->second;
}

bool Vocabulary::contains(std::string_view piece) const { return index_.count(std::string(piece)) > 0; }

void Vocabulary::save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& p : pieces_) {
        out += p;
        out += '\n';
    }
    write_file_atomic(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.size() < static_cast<std::size_t>(kSpecialCount)) throw Error("vocabulary file too short: " + path.string());
    for (TokenId i = 0; i < kSpecialCount; ++i) {
        if (lines[static_cast<std::size_t>(i)] != kSpecials[static_cast<std::size_t>(i)])
            throw Error("vocabulary file has unexpected special tokens: " + path.string());
    }
    Vocabulary vocab;
    for (std::size_t i = kSpecialCount; i < lines.size(); ++i) {
        if (!lines[i].empty()) vocab.add(lines[i]);
    }
    return vocab;
}

std::vector<std::string> WordTokenizer::pieces(std::string_view text) const {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto emit_plain = [&](std::string_view chunk) {
        for (auto& p : word_punct_split(chunk)) out.push_back(ascii_lower(p));
    };
    while (start < text.size()) {
        std::size_t best = std::string_view::npos;
        std::string_view found;
        for (auto s : kSpecials) {
            auto pos = text.find(s, start);
            if (pos < best) {
                best = pos;
                found = s;
            }
        }
        if (best == std::string_view::npos) {
            emit_plain(text.substr(start));
            break;
        }
        emit_plain(text.substr(start, best - start));
        out.emplace_back(found);
        start = best + found.size();
    }
    return out;
}

std::string WordTokenizer::join_pieces(const std::vector<std::string>& pieces) const { return join(pieces, " "); }

std::vector<TokenId> WordTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto& p : pieces(text)) ids.push_back(vocab_.id_of(p));
    return ids;
}

std::string WordTokenizer::decode(std::span<const TokenId> ids, bool keep_special) const {
    std::string out;
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) continue;
        if (!keep_special && vocab_.is_special(id)) continue;
        const auto& p = vocab_.piece(id);
        if (!out.empty() && !attaches_left(p)) out.push_back(' ');
        out += p;
    }
    return out;
}

}  // namespace ctxpara
