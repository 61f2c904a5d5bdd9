#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "ctxpara/common.hpp"

using namespace ctxpara;
namespace fs = std::filesystem;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
    EXPECT_EQ(same, 0);
}

TEST(Rng, UniformInUnitInterval) {
    Rng r(3);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
    Rng r(4);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.uniform_index(7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 400);
    EXPECT_THROW(r.uniform_index(0), Error);
}

TEST(Rng, NormalMoments) {
    Rng r(5);
    double s = 0.0, s2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.02);
    EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Rng, ShuffleIsPermutation) {
    Rng r(6);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    auto w = v;
    r.shuffle(w);
    EXPECT_NE(v, w);
    std::sort(w.begin(), w.end());
    EXPECT_EQ(v, w);
}

TEST(DeriveSeed, DeterministicAndNameSensitive) {
    EXPECT_EQ(derive_seed(7, "sft"), derive_seed(7, "sft"));
    EXPECT_NE(derive_seed(7, "sft"), derive_seed(7, "rl"));
    EXPECT_NE(derive_seed(7, "sft"), derive_seed(8, "sft"));
}

TEST(Fnv, KnownVector) {
    EXPECT_EQ(fnv1a64(""), 14695981039346656037ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Text, TrimCollapseLower) {
    EXPECT_EQ(trim("  hi there \n"), "hi there");
    EXPECT_EQ(collapse_whitespace(" a \t b\n\nc "), "a b c");
    EXPECT_EQ(ascii_lower("HeLLo ÄB"), "hello Äb");
}

TEST(Text, Utf8Validation) {
    EXPECT_TRUE(is_valid_utf8("plain"));
    EXPECT_TRUE(is_valid_utf8("caf\xc3\xa9"));
    EXPECT_FALSE(is_valid_utf8("\xc3"));
    EXPECT_FALSE(is_valid_utf8("\xff\xfe"));
}

TEST(Text, WordPunctSplit) {
    EXPECT_EQ(word_punct_split("Hello, world!"), (std::vector<std::string>{"Hello", ",", "world", "!"}));
    EXPECT_EQ(word_punct_split("don't stop..."), (std::vector<std::string>{"don't", "stop", ".", ".", "."}));
    EXPECT_EQ(word_punct_split("'quoted'"), (std::vector<std::string>{"'", "quoted", "'"}));
    EXPECT_TRUE(word_punct_split("   ").empty());
}

TEST(Text, PunctuationOnly) {
    EXPECT_TRUE(is_punctuation_only("?!"));
    EXPECT_FALSE(is_punctuation_only("a."));
}

TEST(Text, Join) {
    EXPECT_EQ(join({"a", "b", "c"}, ", "), "a, b, c");
    EXPECT_EQ(join({}, ","), "");
}

TEST(Files, AtomicWriteRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "ctxpara_common_test";
    fs::create_directories(dir);
    const fs::path p = dir / "x.txt";
    write_file_atomic(p, "line1\nline2\n");
    EXPECT_EQ(read_file(p), "line1\nline2\n");
    EXPECT_EQ(read_lines(p), (std::vector<std::string>{"line1", "line2"}));
    write_file_atomic(p, "replaced");
    EXPECT_EQ(read_file(p), "replaced");
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
    EXPECT_EQ(names, std::set<std::string>{"x.txt"});
    fs::remove_all(dir);
}

TEST(Files, MissingFileThrows) { EXPECT_THROW(read_file("/nonexistent/ctxpara/file"), Error); }
