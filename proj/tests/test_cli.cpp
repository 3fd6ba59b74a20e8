#include <sys/wait.h>

#include <cstdlib>

#include <gtest/gtest.h>

#include "docpack/pipeline.hpp"
#include "fixture.hpp"

namespace {

struct Run {
    int code;
    std::string out;
};

Run cli(const std::string& args, const std::filesystem::path& dir) {
    const auto out = dir / "stdout.txt";
    const std::string cmd = std::string(DOCPACK_CLI) + " " + args + " > " + out.string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, fixture::slurp(out)};
}

}  // namespace

TEST(Cli, FullPipeline) {
    const auto dir = fixture::scratch("cli-full");
    const auto store = (dir / "store.jsonl").string();
    const auto convs = (dir / "convs.jsonl").string();
    const auto packed = (dir / "packed.bin").string();

    EXPECT_EQ(cli("ingest --input " + fixture::path("corpus.jsonl") + " --output " + store, dir).code, 0);
    const auto built = cli("build-qa --input " + store + " --output " + convs, dir);
    EXPECT_EQ(built.code, 0);
    EXPECT_NE(built.out.find("total\t15"), std::string::npos);

    const auto pk = cli("pack --t-tok 2048 --t-img 4 --input " + convs + " --output " + packed, dir);
    EXPECT_EQ(pk.code, 0);
    EXPECT_NE(pk.out.find("Waste Reduction Ratio"), std::string::npos);
    const auto report = nlohmann::json::parse(fixture::slurp(packed + ".report.json"));
    EXPECT_EQ(report["subsamples"].get<int>() >= 15, true);

    const auto st = cli("stats --format json --input " + convs + " --packed " + packed, dir);
    EXPECT_EQ(st.code, 0);
    const auto j = nlohmann::json::parse(st.out);
    EXPECT_EQ(j["corpus"]["total_conversations"], 15);
    EXPECT_EQ(j["packing"], report);
}

TEST(Cli, TomlConfigAndOverride) {
    const auto dir = fixture::scratch("cli-toml");
    const auto toml = dir / "bench.toml";
    std::ofstream(toml) << "t_tok = 4096\nseed = 7\n\n[bench]\nsamples = 50\nmin_tokens = 100\nmax_tokens = 3000\n";
    const auto a = cli("--config " + toml.string() + " bench --format json", dir);
    ASSERT_EQ(a.code, 0);
    const auto ja = nlohmann::json::parse(a.out);
    EXPECT_EQ(ja["packed"]["subsamples"], 50);
    // Flag beats file: a larger threshold never needs more sequences.
    const auto b = cli("--config " + toml.string() + " bench --format json --t-tok 8192", dir);
    ASSERT_EQ(b.code, 0);
    const auto jb = nlohmann::json::parse(b.out);
    EXPECT_EQ(jb["packed"]["subsamples"], 50);
    EXPECT_LE(jb["packed"]["packed_sequences"].get<int>(), ja["packed"]["packed_sequences"].get<int>());
    EXPECT_EQ(jb["naive"]["total_pad_tokens"].get<int>() - ja["naive"]["total_pad_tokens"].get<int>(), 50 * 4096);
    // Same seed, same bytes.
    EXPECT_EQ(cli("--config " + toml.string() + " bench --format json", dir).out, a.out);
}

TEST(Cli, EmptyInputWarns) {
    const auto dir = fixture::scratch("cli-empty");
    const auto empty = dir / "empty.jsonl";
    std::ofstream(empty).close();
    const auto store = dir / "store.jsonl";
    EXPECT_EQ(cli("ingest --input " + empty.string() + " --output " + store.string(), dir).code, 0);
    EXPECT_NE(fixture::slurp(dir / "stderr.txt").find("no records"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(store));
    EXPECT_EQ(std::filesystem::file_size(store), 0u);
}

TEST(Cli, ExitCodes) {
    const auto dir = fixture::scratch("cli-codes");
    const auto store = (dir / "store.jsonl").string();
    // Record errors only fail the run with --strict.
    EXPECT_EQ(cli("ingest --input " + fixture::path("corpus_bad.jsonl") + " --output " + store, dir).code, 0);
    EXPECT_EQ(cli("ingest --strict --input " + fixture::path("corpus_bad.jsonl") + " --output " + store, dir).code, 2);
    EXPECT_EQ(cli("ingest --input " + (dir / "missing.jsonl").string() + " --output " + store, dir).code, 5);
    EXPECT_EQ(cli("bench --t-tok 0", dir).code, 3);
    EXPECT_EQ(cli("bench --policy sideways", dir).code, 3);
    EXPECT_EQ(cli("bench --no-such-flag", dir).code, 3);
    EXPECT_EQ(cli("", dir).code, 3);

    const auto convs = (dir / "convs.jsonl").string();
    ASSERT_EQ(cli("ingest --input " + fixture::path("corpus.jsonl") + " --output " + store, dir).code, 0);
    ASSERT_EQ(cli("build-qa --input " + store + " --output " + convs, dir).code, 0);
    EXPECT_EQ(cli("pack --t-tok 512 --input " + convs + " --output " + (dir / "p.bin").string(), dir).code, 4);
    EXPECT_NE(fixture::slurp(dir / "stderr.txt").find("a1#0"), std::string::npos);
    EXPECT_EQ(cli("pack --input " + convs + " --output " + convs, dir).code, 3);
}
