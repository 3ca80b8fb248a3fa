#include <random>

#include <gtest/gtest.h>

#include "kcb/morphology.hpp"

using namespace kcb;
using namespace kcb::morph;

namespace {

Lexicon small_lexicon() {
    return Lexicon::parse(
        "# surface\tstem\taffixes\tpos\ttag\n"
        "ibihe\the\ti,bi\tNOUN\tN8\n"
        "ibihe\thee\t\tVERB\tV1\n"
        ".\t.\t\tPUNCT\tP\n"
        "mu\tmu\t\tPREP\tPR\n"
        "bikoresho\tkoresho\tbi\tNOUN\tN8\n");
}

}  // namespace

TEST(Analyze, LexiconWordMirrorsSegmentation) {
    auto lex = small_lexicon();
    auto out = analyze("ibihe", lex, BpeModel{});
    ASSERT_EQ(out.words.size(), 1u);
    const auto& w = out.words[0];
    EXPECT_EQ(w.surface, "ibihe");
    EXPECT_EQ(w.stem, "he");
    EXPECT_EQ(w.affixes, (std::vector<std::string>{"i", "bi"}));
    EXPECT_EQ(w.pos, Pos::NOUN);
    EXPECT_EQ(w.morph_tag, "N8");
    EXPECT_FALSE(w.is_fallback);
}

TEST(Analyze, PunctuationIsIdentity) {
    auto out = analyze(".", small_lexicon(), BpeModel{});
    ASSERT_EQ(out.words.size(), 1u);
    EXPECT_EQ(out.words[0].pos, Pos::PUNCT);
    EXPECT_TRUE(out.words[0].affixes.empty());
}

TEST(Analyze, OutOfLexiconTokensFallBack) {
    // z o r g f u l -> zo r g f u l -> zor g f u l -> zorg f u l -> zorg fu l -> zorg ful
    BpeModel bpe({"f", "g", "l", "o", "r", "u", "z", "1", "2", "3"},
                 {{"z", "o"}, {"zo", "r"}, {"zor", "g"}, {"f", "u"}, {"fu", "l"}});
    ASSERT_EQ(bpe_fallback("zorgful", bpe), (std::vector<std::string>{"zorg", "ful"}));
    auto out = analyze("zorgful 123", small_lexicon(), bpe);
    ASSERT_EQ(out.words.size(), 3u);
    EXPECT_EQ(out.words[0].stem, "zorg");
    EXPECT_EQ(out.words[0].pos, Pos::PROPN);
    EXPECT_EQ(out.words[1].stem, "ful");
    EXPECT_EQ(out.words[1].pos, Pos::PROPN);
    EXPECT_EQ(out.words[2].stem, "123");
    EXPECT_EQ(out.words[2].pos, Pos::NUM);
    for (const auto& w : out.words) {
        EXPECT_TRUE(w.is_fallback);
        EXPECT_TRUE(w.affixes.empty());
        EXPECT_EQ(w.morph_tag, kFallbackTag);
    }
}

TEST(Analyze, EmptyAfterNormalizationThrows) {
    EXPECT_THROW(analyze("  \t\n ", small_lexicon(), BpeModel{}), EmptyInput);
    EXPECT_THROW(analyze("", small_lexicon(), BpeModel{}), EmptyInput);
}

TEST(Analyze, FirstListedEntryWins) {
    auto out = analyze("ibihe", small_lexicon(), BpeModel{});
    EXPECT_EQ(out.words[0].stem, "he");
}

TEST(Analyze, NfcNormalizesComposedAndDecomposedForms) {
    Lexicon lex = Lexicon::parse("caf\xC3\xA9\tcaf\xC3\xA9\t\tNOUN\tN1\n");  // precomposed é
    auto out = analyze("cafe\xCC\x81", lex, BpeModel{});                     // e + combining acute
    ASSERT_EQ(out.words.size(), 1u);
    EXPECT_FALSE(out.words[0].is_fallback);
}

TEST(Analyze, RoundTripAndDeterminism) {
    auto lex = small_lexicon();
    const std::string text = "  ibihe   bikoresho mu\t. ";
    auto a = analyze(text, lex, BpeModel{});
    auto b = analyze(text, lex, BpeModel{});
    EXPECT_EQ(a, b);
    std::string joined;
    for (const auto& w : a.words) joined += (joined.empty() ? "" : " ") + w.surface;
    EXPECT_EQ(joined, "ibihe bikoresho mu .");
}

TEST(Lexicon, RejectsMalformedLines) {
    EXPECT_THROW(Lexicon::parse("a\tb\tc\n"), FormatError);
    EXPECT_THROW(Lexicon::parse("a\tb\t\tNOPE\tX\n"), FormatError);
    EXPECT_THROW(Lexicon::parse("a\t\t\tNOUN\tX\n"), FormatError);
}

TEST(Lexicon, VocabulariesReserveMaskAndFallback) {
    auto lex = small_lexicon();
    EXPECT_EQ(lex.stems().find("he"), 1u);
    EXPECT_EQ(lex.tags().find(std::string(kFallbackTag)), 1u);
    EXPECT_TRUE(lex.pos_set().count(Pos::NUM));
    EXPECT_TRUE(lex.pos_set().count(Pos::PROPN));
    auto again = Lexicon::parse(lex.to_text());
    EXPECT_EQ(again.to_text(), lex.to_text());
    // The losing duplicate entry is not kept, so its stem never enters the vocabulary.
    EXPECT_FALSE(lex.stems().contains("hee"));
}

TEST(Bpe, FallbackExamples) {
    EXPECT_EQ(bpe_fallback("aa", BpeModel({"a"}, {{"a", "a"}})), (std::vector<std::string>{"aa"}));
    EXPECT_EQ(bpe_fallback("abc", BpeModel({"a", "b", "c"}, {})), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(bpe_fallback("abab", BpeModel({"a", "b"}, {{"a", "b"}, {"ab", "ab"}})),
              (std::vector<std::string>{"abab"}));
}

TEST(Bpe, UnknownCharactersBecomeOwnUnits) {
    BpeModel bpe({"a", "b"}, {{"a", "b"}});
    auto units = bpe_fallback("abxab", bpe);
    EXPECT_EQ(units, (std::vector<std::string>{"ab", "x", "ab"}));
    EXPECT_EQ(bpe.unit_id("x"), BpeModel::kUnknownUnit);
}

TEST(Bpe, TrainingExamples) {
    EXPECT_EQ(train_bpe({"aaaa"}, 1).merges(), (std::vector<BpeModel::Merge>{{"a", "a"}}));
    // Round 1: (a,b)=4 beats (b,a)=2. Round 2: only (ab,ab)=2 remains.
    EXPECT_EQ(train_bpe({"abab", "abab"}, 2).merges(), (std::vector<BpeModel::Merge>{{"a", "b"}, {"ab", "ab"}}));
    EXPECT_TRUE(train_bpe({"hello world"}, 0).merges().empty());
    EXPECT_THROW(train_bpe({}, 3), EmptyInput);
    EXPECT_THROW(train_bpe({"   "}, 3), EmptyInput);
}

TEST(Bpe, TiesBreakLexicographically) {
    // "ab" and "cd" both occur once; (a,b) < (c,d).
    EXPECT_EQ(train_bpe({"ab cd"}, 1).merges(), (std::vector<BpeModel::Merge>{{"a", "b"}}));
}

TEST(Bpe, FileRoundTrip) {
    auto bpe = train_bpe({"banana bandana cabana", "ananas"}, 6);
    auto again = BpeModel::parse(bpe.to_text());
    EXPECT_EQ(again.merges(), bpe.merges());
    EXPECT_EQ(again.alphabet(), bpe.alphabet());
    EXPECT_EQ(again.units().keys(), bpe.units().keys());
    EXPECT_THROW(BpeModel::parse("bpe-v2\n"), FormatError);
    EXPECT_THROW(BpeModel::parse("bpe-v1\nab\n"), FormatError);
}

TEST(Bpe, MergeListWithoutAlphabetLine) {
    auto bpe = BpeModel::parse("bpe-v1\na\tb\nab\tc\n");
    EXPECT_EQ(bpe.alphabet(), (std::set<std::string>{"a", "b", "c"}));
    EXPECT_EQ(bpe_fallback("abc", bpe), (std::vector<std::string>{"abc"}));
}

TEST(Bpe, UnitsAlwaysConcatenateToSurface) {
    std::mt19937_64 rng(42);
    const std::string letters = "abcdeé";
    std::vector<std::string> corpus;
    auto random_word = [&](std::size_t len) {
        std::string w;
        std::uniform_int_distribution<int> pick(0, 5);
        for (std::size_t i = 0; i < len; ++i) {
            int c = pick(rng);
            w += c == 5 ? std::string("\xC3\xA9") : std::string(1, letters[c]);
        }
        return w;
    };
    for (int i = 0; i < 50; ++i) corpus.push_back(random_word(2 + i % 7));
    auto bpe = train_bpe(corpus, 20);
    for (int trial = 0; trial < 500; ++trial) {
        auto w = random_word(1 + trial % 12);
        std::string joined;
        for (const auto& u : bpe_fallback(w, bpe)) joined += u;
        EXPECT_EQ(joined, w);
    }
}

TEST(ScoringFilter, DefaultExcludesPrepositionsAndPunctuation) {
    ScoringFilter f;
    MorphAnalysis m{"x", "x", {}, Pos::PUNCT, "P", false};
    EXPECT_FALSE(is_scoring_token(m, f));
    m.pos = Pos::PREP;
    EXPECT_FALSE(is_scoring_token(m, f));
    m.pos = Pos::NOUN;
    EXPECT_TRUE(is_scoring_token(m, f));
    ScoringFilter nouns{{Pos::NOUN}};
    EXPECT_FALSE(is_scoring_token(m, nouns));
    // Fallback analyses are covered too.
    MorphAnalysis fb{"zz", "zz", {}, Pos::PROPN, std::string(kFallbackTag), true};
    EXPECT_TRUE(is_scoring_token(fb, f));
}

TEST(ScoringFilter, ParseAndValidate) {
    auto f = ScoringFilter::parse("PREP,PUNCT");
    EXPECT_EQ(f.excluded, (std::set<Pos>{Pos::PREP, Pos::PUNCT}));
    EXPECT_TRUE(ScoringFilter::parse("").excluded.empty());
    EXPECT_THROW(ScoringFilter::parse("PREP,BOGUS"), ConfigError);
    auto lex = small_lexicon();
    EXPECT_NO_THROW(f.validate(lex));
    EXPECT_THROW(ScoringFilter{{Pos::ADV}}.validate(lex), ConfigError);
}
