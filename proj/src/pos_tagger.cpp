#include "ctxpara/pos_tagger.hpp"

#include <cctype>
#include <sstream>
#include <unordered_map>

namespace ctxpara {

namespace {

// word TAG[|TAG...]; first tag is the default reading.
constexpr std::string_view kLexicon = R"(
a DT
an DT
the DT
this DT
that DT|IN|WDT
these DT
those DT
some DT
any DT
each DT
every DT
no DT|UH
all DT
both DT
another DT
either DT
neither DT
i PRP
you PRP
he PRP
she PRP
it PRP
we PRP
they PRP
me PRP
him PRP
her PRP$|PRP
us PRP
them PRP
myself PRP
yourself PRP
itself PRP
ourselves PRP
themselves PRP
my PRP$
your PRP$
his PRP$
its PRP$
our PRP$
their PRP$
mine PRP
yours PRP
what WP
who WP
whom WP
which WDT
whose WP$
when WRB
where WRB
why WRB
how WRB
there EX|RB
here RB
in IN
on IN
at IN
by IN
for IN
with IN
about IN
from IN
of IN
into IN
onto IN
over IN
under IN
after IN
before IN
during IN
until IN
till IN
since IN
through IN
between IN
against IN
without IN
within IN
upon IN
as IN
than IN
if IN
because IN
while IN
though IN
although IN
unless IN
whether IN
via IN
per IN
to TO
and CC
or CC
but CC
nor CC
yet CC|RB
so RB|CC
can MD
could MD
will MD
would MD
shall MD
should MD
may MD
might MD
must MD
ca MD
wo MD
be VB
am VBP
is VBZ
are VBP
was VBD
were VBD
been VBN
being VBG
have VBP|VB
has VBZ
had VBD|VBN
having VBG
do VBP|VB
does VBZ
did VBD
done VBN
doing VBG
not RB
n't RB
never RB
just RB
definitely RB
already RB
also RB
very RB
really RB
too RB
again RB
soon RB
now RB
then RB
still RB
only RB
even RB
ever RB
always RB
sometimes RB
once RB
today NN|RB
tomorrow NN|RB
yesterday NN|RB
tonight NN|RB
shortly RB
kindly RB
please VB|UH
ok UH|JJ
okay UH|JJ
yes UH
yeah UH
hi UH
hello UH
hey UH
thanks NNS|UH
thank VBP|VB
sorry JJ
same JJ
other JJ
new JJ
extra JJ
old JJ
good JJ
great JJ
bad JJ
late JJ
early JJ
big JJ
small JJ
long JJ
sure JJ
happy JJ
able JJ
possible JJ
available JJ
wrong JJ
right JJ|NN
cold JJ
hot JJ
senior JJ
more JJR|RBR
less JJR
most JJS|RBS
first JJ
last JJ
next JJ
up RP|IN
out RP|IN
off RP|IN
down RP|IN
back RB
away RB
one CD
two CD
three CD
four CD
five CD
ten CD
order NN|VB
orders NNS|VBZ
food NN
restaurant NN
restaurants NNS
partner NN
partners NNS
delivery NN
word NN
words NNS
chat NN|VB
time NN
minutes NNS
minute NN
hour NN
hours NNS
day NN
days NNS
refund NN|VB
money NN
amount NN
account NN
number NN
phone NN
call NN|VB
issue NN
problem NN
team NN
desk NN
option NN
address NN
payment NN
coupon NN
cancellation NN
cancelation NN
update NN|VB
status NN
meal NN
item NN
items NNS
help VB|NN
wait VB|NN
check VB|NN
confirm VB
cancel VB
deliver VB
proceed VB
request NN|VB
transfer VB|NN
assign VB
connect VB
inform VB
let VB
make VB
take VB
give VB
get VB
go VB
come VB
know VB
see VB
tell VB
ask VB
send VB
share VB
need VBP|VB
want VBP|VB
like IN|VB
understand VBP|VB
apologize VBP|VB
appreciate VBP|VB
promise VBP|VB|NN
close VB|JJ
closed VBN|VBD|JJ
)";

struct Entry {
    std::vector<std::string> tags;
};

bool has_tag(const Entry& e, std::string_view tag) {
    for (const auto& t : e.tags)
        if (t == tag) return true;
    return false;
}

bool has_verb_reading(const Entry& e) {
    for (const auto& t : e.tags)
        if (is_verb_tag(t)) return true;
    return false;
}

bool has_noun_reading(const Entry& e) {
    for (const auto& t : e.tags)
        if (is_noun_tag(t)) return true;
    return false;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_be_or_have(std::string_view lower) {
    static const char* forms[] = {"be", "am", "is", "are", "was", "were", "been", "being", "have", "has", "had", "having", "get", "got"};
    for (auto f : forms)
        if (lower == f) return true;
    return false;
}

// Shape/suffix guess for words outside the lexicon.
Entry guess(std::string_view word) {
    const std::string lower = ascii_lower(word);
    bool digits = !word.empty();
    for (unsigned char c : word) digits = digits && (std::isdigit(c) || c == '.' || c == ',');
    if (digits) return {{"CD"}};
    // Capitalized unknown words are names, sentence-initial or not.
    if (std::isupper(static_cast<unsigned char>(word[0]))) return {{"NNP"}};
    if (ends_with(lower, "ing")) return {{"VBG", "NN"}};
    if (ends_with(lower, "ed")) return {{"VBD", "VBN", "JJ"}};
    if (ends_with(lower, "ly")) return {{"RB"}};
    for (auto s : {"tion", "sion", "ment", "ness", "ity", "ance", "ence", "ship", "ist", "ism", "er", "or"})
        if (ends_with(lower, s)) return {{"NN"}};
    for (auto s : {"ous", "ful", "able", "ible", "ive", "less", "ic", "ish"})
        if (ends_with(lower, s)) return {{"JJ"}};
    if (ends_with(lower, "s") && !ends_with(lower, "ss")) return {{"NNS", "VBZ"}};
    return {{"NN"}};
}

}  // namespace

bool is_noun_tag(std::string_view tag) { return tag == "NN" || tag == "NNS" || tag == "NNP" || tag == "NNPS"; }

bool is_verb_tag(std::string_view tag) {
    return tag == "VB" || tag == "VBD" || tag == "VBG" || tag == "VBN" || tag == "VBP" || tag == "VBZ";
}

struct RuleTagger::Lexicon {
    std::unordered_map<std::string, Entry> words;
};

RuleTagger::RuleTagger() : lexicon_(std::make_unique<Lexicon>()) {
    std::istringstream in{std::string(kLexicon)};
    std::string word, tags;
    while (in >> word >> tags) {
        Entry e;
        std::size_t start = 0;
        while (start <= tags.size()) {
            auto bar = tags.find('|', start);
            if (bar == std::string::npos) bar = tags.size();
            e.tags.push_back(tags.substr(start, bar - start));
            start = bar + 1;
        }
        lexicon_->words.emplace(word, std::move(e));
    }
}

RuleTagger::~RuleTagger() = default;

std::string RuleTagger::id() const { return std::string(kName) + "@" + std::string(kVersion); }

std::vector<TaggedToken> RuleTagger::tag(std::string_view sentence) const {
    if (!is_valid_utf8(sentence)) throw TaggingError("tagger input is not valid UTF-8");
    const auto tokens = word_punct_split(sentence);
    std::vector<Entry> entries;
    std::vector<TaggedToken> out;
    entries.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& tok = tokens[i];
        if (is_punctuation_only(tok)) {
            entries.push_back({{tok}});
        } else if (auto it = lexicon_->words.find(ascii_lower(tok)); it != lexicon_->words.end()) {
            entries.push_back(it->second);
        } else {
            entries.push_back(guess(tok));
        }
        out.push_back({tok, entries.back().tags.front()});
    }

    // Left-context rules, applied in one pass so each sees the previous decision.
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& e = entries[i];
        if (e.tags.size() < 2 && !(e.tags.front() == "NN" || e.tags.front() == "NNS")) continue;
        auto prev_tag = [&](std::size_t back) -> std::string {
            return i >= back ? out[i - back].tag : std::string();
        };
        auto prev_lower = [&](std::size_t back) -> std::string {
            return i >= back ? ascii_lower(out[i - back].text) : std::string();
        };
        const bool next_is_boundary = i + 1 >= out.size() || is_punctuation_only(out[i + 1].text);

        // "as promised", "as expected": reduced participle clause, not a finite verb.
        if (prev_lower(1) == "as" && (has_tag(e, "VBN") || has_tag(e, "VBD")) && next_is_boundary) {
            out[i].tag = "JJ";
            continue;
        }
        // Determiner + adjective reading + noun: attributive use, as in "the corrected invoice".
        if ((prev_tag(1) == "DT" || prev_tag(1) == "PRP$") && has_tag(e, "JJ") && i + 1 < out.size() &&
            has_noun_reading(entries[i + 1])) {
            out[i].tag = "JJ";
            continue;
        }
        // be/have (+ adverb) + -ed form -> past participle.
        if (has_tag(e, "VBN") &&
            (is_be_or_have(prev_lower(1)) || (prev_tag(1) == "RB" && is_be_or_have(prev_lower(2))))) {
            out[i].tag = "VBN";
            continue;
        }
        // to / modal (+ adverb) (+ subject pronoun, as in "shall I") + verb reading -> base form.
        const bool after_to = prev_tag(1) == "TO";
        const bool after_modal = prev_tag(1) == "MD" || (prev_tag(1) == "RB" && prev_tag(2) == "MD") ||
                                 (prev_tag(1) == "PRP" && prev_tag(2) == "MD");
        if ((after_to || after_modal) && has_verb_reading(e)) {
            out[i].tag = "VB";
            continue;
        }
        // Base verb followed by a second verb reading: "please wait", "let know".
        if (prev_tag(1) == "VB" && prev_lower(1) == "please" && has_verb_reading(e)) {
            out[i].tag = "VB";
            continue;
        }
        // Determiner or possessive (+ adjective) + noun reading -> noun.
        if ((prev_tag(1) == "DT" || prev_tag(1) == "PRP$" || prev_tag(1) == "JJ") && has_noun_reading(e)) {
            out[i].tag = has_tag(e, "NNS") ? "NNS" : (has_tag(e, "NN") ? "NN" : out[i].tag);
            continue;
        }
        // Subject pronoun + verb reading -> present tense.
        if (prev_tag(1) == "PRP" && has_verb_reading(e)) {
            if (has_tag(e, "VBP")) out[i].tag = "VBP";
            else if (has_tag(e, "VBD")) out[i].tag = "VBD";
            else if (has_tag(e, "VB")) out[i].tag = "VBP";
            continue;
        }
    }
    return out;
}

std::unique_ptr<PosTagger> make_tagger(std::string_view name) {
    const std::string full = std::string(RuleTagger::kName) + "@" + std::string(RuleTagger::kVersion);
    if (name == RuleTagger::kName || name == full) return std::make_unique<RuleTagger>();
    throw ValidationError("unknown tagger '" + std::string(name) + "' (available: " + full + ")");
}

}  // namespace ctxpara
