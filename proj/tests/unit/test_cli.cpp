#include <gtest/gtest.h>

#include <filesystem>

#include "ctxpara/cli.hpp"
#include "ctxpara/common.hpp"

using namespace ctxpara;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "ctxpara");
    return cli::dispatch(args);
}

fs::path temp(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("ctxpara_cli_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
    EXPECT_EQ(run({"--help"}), 0);
    EXPECT_EQ(run({"ingest", "--help"}), 0);
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}), 2);
    EXPECT_EQ(run({"frobnicate"}), 2);
    EXPECT_EQ(run({"ingest", "--bogus"}), 2);
    EXPECT_EQ(run({"ingest"}), 2);  // missing --input
}

TEST(Cli, ConfigErrorsListEveryKey) {
    const nlohmann::json bad = {{"lm", {{"d_modle", 3}}}, {"rl", {{"kl_beta", "high"}}}, {"nonsense", 1}};
    const auto errors = cli::config_errors(bad);
    ASSERT_EQ(errors.size(), 3u);
    std::string all;
    for (const auto& e : errors) all += e + "\n";
    EXPECT_NE(all.find("lm.d_modle"), std::string::npos);
    EXPECT_NE(all.find("rl.kl_beta"), std::string::npos);
    EXPECT_NE(all.find("nonsense"), std::string::npos);
    EXPECT_THROW(cli::resolve_config(bad), ValidationError);
    EXPECT_TRUE(cli::config_errors(cli::default_config()).empty());
}

TEST(Cli, ModuleSeedsAreNotConfigurable) {
    EXPECT_FALSE(cli::config_errors({{"rl", {{"seed", 3}}}}).empty());
}

TEST(Cli, BadConfigFileExitsOne) {
    const auto p = temp("bad_config.json");
    write_file_atomic(p, R"({"corpus": {"windw": 3}})");
    const auto out = temp("bad_config_out");
    EXPECT_EQ(run({"ingest", "--config", p.string(), "--input", std::string(CTXPARA_FIXTURES) + "/transcripts.jsonl",
                   "--out", out.string()}),
              1);
    EXPECT_FALSE(fs::exists(out / "corpus.jsonl"));
    fs::remove(p);
}

TEST(Cli, IngestWritesOutputsAndManifest) {
    const auto out = temp("ingest");
    ASSERT_EQ(run({"ingest", "--input", std::string(CTXPARA_FIXTURES) + "/transcripts_with_errors.jsonl", "--out",
                   out.string()}),
              0);
    EXPECT_TRUE(fs::exists(out / "corpus.jsonl"));
    const auto summary = nlohmann::json::parse(read_file(out / "ingest_summary.json"));
    EXPECT_EQ(summary.at("errors").size(), 3u);
    EXPECT_TRUE(fs::exists(out / "run_manifest.json"));
    const std::string first = read_file(out / "corpus.jsonl");
    ASSERT_EQ(run({"ingest", "--input", std::string(CTXPARA_FIXTURES) + "/transcripts_with_errors.jsonl", "--out",
                   out.string()}),
              0);
    EXPECT_EQ(read_file(out / "corpus.jsonl"), first);
    fs::remove_all(out);
}

TEST(Cli, StrictIngestFails) {
    const auto out = temp("strict");
    EXPECT_EQ(run({"ingest", "--strict", "--input", std::string(CTXPARA_FIXTURES) + "/transcripts_with_errors.jsonl",
                   "--out", out.string()}),
              1);
    fs::remove_all(out);
}

TEST(Cli, MissingInputFileExitsOne) {
    EXPECT_EQ(run({"ingest", "--input", "/nonexistent/ctxpara.jsonl", "--out", temp("missing").string()}), 1);
}
