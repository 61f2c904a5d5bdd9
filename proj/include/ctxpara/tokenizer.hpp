#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxpara {

using TokenId = std::int32_t;

namespace special {
inline constexpr std::string_view kEndOfText = "<|endoftext|>";
inline constexpr std::string_view kUnknown = "<|unk|>";
inline constexpr std::string_view kContextControl = "<|ctx_ctrl|>";
inline constexpr std::string_view kControlWord = "<|cw|>";
inline constexpr std::string_view kResponse = "<|resp|>";
}  // namespace special

/// Token inventory. Special tokens always occupy ids 0..4 in the order
/// endoftext, unk, ctx_ctrl, cw, resp.
class Vocabulary {
  public:
    Vocabulary();

    /// Words sorted by descending count then lexicographically; at most
    /// max_words entries with count >= min_count.
    static Vocabulary build(const std::vector<std::vector<std::string>>& tokenized, std::size_t min_count,
                            std::size_t max_words);

    TokenId id_of(std::string_view piece) const;
    const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
    bool contains(std::string_view piece) const;
    std::size_t size() const { return pieces_.size(); }
    bool is_special(TokenId id) const { return id >= 0 && id < kSpecialCount; }

    TokenId end_of_text() const { return 0; }
    TokenId unknown() const { return 1; }
    TokenId context_control() const { return 2; }
    TokenId control_word() const { return 3; }
    TokenId response() const { return 4; }

    static constexpr TokenId kSpecialCount = 5;

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    const std::vector<std::string>& pieces() const { return pieces_; }

  private:
    void add(std::string piece);

    std::vector<std::string> pieces_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Tokenizer contract shared by sample construction and the language model.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::string name() const = 0;
    /// Surface pieces of a text; special-token literals are single pieces.
    virtual std::vector<std::string> pieces(std::string_view text) const = 0;
    /// Inverse of pieces() up to whitespace: pieces(join_pieces(p)) == p.
    virtual std::string join_pieces(const std::vector<std::string>& pieces) const = 0;

    std::size_t count(std::string_view text) const { return pieces(text).size(); }
};

/// Lowercasing word/punctuation tokenizer with a closed vocabulary.
class WordTokenizer : public Tokenizer {
  public:
    WordTokenizer() = default;
    explicit WordTokenizer(Vocabulary vocab) : vocab_(std::move(vocab)) {}

    std::string name() const override { return "word-punct-lower-v1"; }
    std::vector<std::string> pieces(std::string_view text) const override;
    std::string join_pieces(const std::vector<std::string>& pieces) const override;

    std::vector<TokenId> encode(std::string_view text) const;
    /// Readable text; special tokens are dropped unless keep_special is set.
    std::string decode(std::span<const TokenId> ids, bool keep_special = false) const;

    const Vocabulary& vocab() const { return vocab_; }

  private:
    Vocabulary vocab_;
};

}  // namespace ctxpara
