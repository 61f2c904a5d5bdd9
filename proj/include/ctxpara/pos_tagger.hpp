#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ctxpara/common.hpp"

namespace ctxpara {

class TaggingError : public Error {
  public:
    using Error::Error;
};

struct TaggedToken {
    std::string text;
    std::string tag;  // Penn Treebank tag
};

class PosTagger {
  public:
    virtual ~PosTagger() = default;
    /// "name@version"; recorded in manifests so golden outputs stay tied to one tagger.
    virtual std::string id() const = 0;
    virtual std::vector<TaggedToken> tag(std::string_view sentence) const = 0;
};

/// Lexicon + suffix + contextual-rule tagger in the style of a transformation
/// based tagger. Each lexicon entry lists its admissible tags, most likely
/// first; unknown words are guessed from shape and suffix; a fixed set of
/// left-context rules then resolves noun/verb ambiguity.
class RuleTagger : public PosTagger {
  public:
    static constexpr std::string_view kName = "ctxpara-rule-tagger";
    static constexpr std::string_view kVersion = "1.0";

    RuleTagger();
    ~RuleTagger() override;

    std::string id() const override;
    std::vector<TaggedToken> tag(std::string_view sentence) const override;

  private:
    struct Lexicon;
    std::unique_ptr<Lexicon> lexicon_;
};

/// Returns the tagger registered under `name` ("ctxpara-rule-tagger" or
/// "ctxpara-rule-tagger@1.0"). Throws ValidationError for unknown names.
std::unique_ptr<PosTagger> make_tagger(std::string_view name);

bool is_noun_tag(std::string_view tag);
bool is_verb_tag(std::string_view tag);

}  // namespace ctxpara
