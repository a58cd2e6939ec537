#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <pcst/cli.hpp>
#include <pcst/manifest.hpp>
#include <pcst/tensor_io.hpp>

namespace fs = std::filesystem;
using namespace pcst;

namespace {

struct RunResult {
    int code;
    nlohmann::json summary;
    std::string err;
};

RunResult pcst_run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    RunResult r{code, nullptr, err.str()};
    const std::string text = out.str();
    const auto nl = text.rfind('\n', text.size() >= 2 ? text.size() - 2 : 0);
    const std::string last = nl == std::string::npos ? text : text.substr(nl + 1);
    if (!last.empty() && last.front() == '{') r.summary = nlohmann::json::parse(last);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("pcst_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string at(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

PairRecord sample_record() {
    PairRecord r;
    r.input = "burst_00/noisy_02.pcrf";
    r.targets = {"burst_00/target_00.pcrf", "burst_00/target_01.pcrf"};
    r.offset_used = {3, 17};
    r.s_yr = -98.25;
    r.retained = true;
    r.seed_trail = {7, 18446744073709551615ull};
    return r;
}

} // namespace

TEST(Manifest, RoundTripPreservesEveryField) {
    PairRecord bare;
    bare.input = "a.pcrf";
    bare.targets = {"b.pcrf"};
    const std::vector<PairRecord> records{sample_record(), bare};
    std::istringstream in(serialize_manifest(records));
    EXPECT_EQ(parse_manifest(in), records);
}

TEST(Manifest, OptionalFieldsAreOmittedWhenAbsent) {
    PairRecord bare;
    bare.input = "a.pcrf";
    bare.targets = {"b.pcrf"};
    const auto j = to_json(bare);
    EXPECT_FALSE(j.contains("s_yr"));
    EXPECT_FALSE(j.contains("retained"));
    EXPECT_EQ(j.at("offset_used"), nlohmann::json::array({0, 0}));
}

TEST(Manifest, BlankLinesSkippedAndBadLinesLocated) {
    std::istringstream ok("\n" + serialize_manifest({sample_record()}) + "   \n");
    EXPECT_EQ(parse_manifest(ok).size(), 1u);
    const std::string first = serialize_manifest({sample_record()});
    std::istringstream bad(first + "{\"input\": 3}\n");
    try {
        parse_manifest(bad);
        FAIL() << "malformed record accepted";
    } catch (const format_error& e) {
        EXPECT_EQ(e.offset(), first.size());
    }
}

TEST(Cli, HelpExitsCleanly) {
    EXPECT_EQ(pcst_run({"--help"}).code, 0);
    EXPECT_EQ(pcst_run({"craft", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
    const RunResult unknown = pcst_run({"bogus"});
    EXPECT_EQ(unknown.code, 2);
    EXPECT_NE(unknown.err.find("bogus"), std::string::npos);
    EXPECT_EQ(unknown.summary.at("status"), "usage_error");
    EXPECT_EQ(pcst_run({}).code, 2);
    EXPECT_EQ(pcst_run({"synth", "--out-dir", "x"}).code, 2);
    EXPECT_EQ(pcst_run({"verify", "--check", "nonsense"}).code, 2);
    EXPECT_EQ(pcst_run({"craft"}).code, 2);
}

TEST(Cli, VerifyLemma11Passes) {
    const RunResult r = pcst_run({"verify", "--check", "lemma11", "--n", "8"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.summary.at("status"), "ok");
    EXPECT_EQ(r.summary.at("command"), "verify");
}

TEST_F(TempDir, VerifyWritesReportAndCsv) {
    const RunResult r = pcst_run({"verify", "--check", "bound", "--n", "12", "--report", at("r.json"), "--csv", at("r.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = nlohmann::json::parse(slurp(dir / "r.json"));
    EXPECT_TRUE(report.is_object());
    const std::string csv = slurp(dir / "r.csv");
    EXPECT_EQ(csv.rfind("check,config,value,expected,tolerance,pass\n", 0), 0u);
}

TEST(Cli, Lemma1PositiveAndNegativeControl) {
    const RunResult pos = pcst_run({"lemma1", "--draws", "3000", "--seed", "1"});
    EXPECT_EQ(pos.code, 0) << pos.err;
    EXPECT_EQ(pos.summary.at("within_4se"), true);
    const RunResult neg = pcst_run({"lemma1", "--draws", "3000", "--seed", "1", "--w-mean", "5"});
    EXPECT_EQ(neg.code, 0) << neg.err;
    EXPECT_EQ(neg.summary.at("within_4se"), false);
    EXPECT_EQ(neg.summary.at("passed"), true);
}

TEST_F(TempDir, ThresholdWithoutCovarianceFails) {
    write_manifest(dir / "m.jsonl", {PairRecord{"a.pcrf", {"b.pcrf"}, {}, std::nullopt, std::nullopt, {}}});
    const RunResult r = pcst_run({"threshold", "--manifest", at("m.jsonl")});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.summary.at("status"), "failed");
}

TEST_F(TempDir, MissingInputFileIsAnError) {
    write_manifest(dir / "m.jsonl", {PairRecord{"nowhere.pcrf", {"b.pcrf"}, {}, std::nullopt, std::nullopt, {}}});
    EXPECT_EQ(pcst_run({"cov", "--manifest", at("m.jsonl")}).code, 1);
}

TEST_F(TempDir, SymmetricCovarianceNeedsNoCut) {
    std::vector<PairRecord> records;
    for (int i = 0; i < 200; ++i) {
        const double s = -100.0 + 0.1 * (i % 21 - 10);
        records.push_back(PairRecord{"a", {"b"}, {}, s, std::nullopt, {}});
    }
    write_manifest(dir / "m.jsonl", records);
    const RunResult t = pcst_run({"threshold", "--manifest", at("m.jsonl"), "--hist-csv", at("h.csv")});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(t.summary.at("s_min").is_null());
    EXPECT_EQ(slurp(dir / "h.csv").rfind("bin_center,count\n", 0), 0u);
    const RunResult f = pcst_run({"filter", "--manifest", at("m.jsonl")});
    ASSERT_EQ(f.code, 0);
    EXPECT_EQ(f.summary.at("retained"), 200);
}

TEST_F(TempDir, EndToEndPipelineIsReproducible) {
    ASSERT_EQ(pcst_run({"synth", "--out-dir", at("bursts"), "--scenes", "3", "--height", "32", "--width", "32",
                        "--sigma", "10", "--kernel-size", "2", "--seed", "5"})
                  .code,
              0);
    EXPECT_TRUE(fs::exists(dir / "bursts" / "burst_00" / "burst.json"));
    EXPECT_TRUE(fs::exists(dir / "bursts" / "burst_02" / "noisy_04.pcrf"));
    EXPECT_TRUE(fs::exists(dir / "bursts" / "burst_02" / "clean_04.pgm"));

    const std::vector<std::string> craft = {"craft", "--bursts-root", at("bursts"), "--patch-size", "5", "--search-box",
                                            "9", "--targets", "2", "--seed", "3", "--manifest", at("m.jsonl")};
    const RunResult c = pcst_run(craft);
    ASSERT_EQ(c.code, 0) << c.err;
    EXPECT_EQ(c.summary.at("targets"), 6);
    const std::string target = slurp(dir / "bursts" / "burst_01" / "target_01.pcrf");
    const std::string manifest = slurp(dir / "m.jsonl");
    const auto meta = nlohmann::json::parse(slurp(dir / "bursts" / "burst_01" / "target_01.json"));
    EXPECT_EQ(meta.at("input_excluded"), true);
    EXPECT_EQ(meta.at("frame_usage").count("2"), 0u);

    const auto records = read_manifest(dir / "m.jsonl");
    ASSERT_EQ(records.size(), 6u);
    EXPECT_EQ(records[0].input, "bursts/burst_00/noisy_02.pcrf");
    EXPECT_EQ(records[0].seed_trail.size(), 2u);

    ASSERT_EQ(pcst_run({"cov", "--manifest", at("m.jsonl")}).code, 0);
    for (const auto& r : read_manifest(dir / "m.jsonl")) ASSERT_TRUE(r.s_yr.has_value());
    const RunResult th = pcst_run({"threshold", "--manifest", at("m.jsonl")});
    ASSERT_EQ(th.code, 0) << th.err;
    ASSERT_EQ(pcst_run({"filter", "--manifest", at("m.jsonl"), "--s-min", "-1e9", "--out", at("f.jsonl")}).code, 0);
    const std::string filtered = slurp(dir / "f.jsonl");
    ASSERT_EQ(pcst_run({"filter", "--manifest", at("f.jsonl"), "--s-min", "-1e9"}).code, 0);
    EXPECT_EQ(slurp(dir / "f.jsonl"), filtered);

    const RunResult tr = pcst_run({"train", "--manifest", at("f.jsonl"), "--out", at("model.json"), "--epochs", "2",
                                   "--crop", "16", "--filters", "2", "--seed", "1"});
    ASSERT_EQ(tr.code, 0) << tr.err;
    EXPECT_EQ(tr.summary.at("pairs"), 6);
    const RunResult ev = pcst_run({"eval", "--model", at("model.json"), "--pairs-dir", at("bursts"), "--csv", at("e.csv")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_EQ(ev.summary.at("pairs"), 3);
    EXPECT_EQ(slurp(dir / "e.csv").rfind("file,psnr_before,psnr_after\n", 0), 0u);

    // Re-running craft with the same seed reproduces every byte.
    ASSERT_EQ(pcst_run(craft).code, 0);
    EXPECT_EQ(slurp(dir / "bursts" / "burst_01" / "target_01.pcrf"), target);
    EXPECT_EQ(slurp(dir / "m.jsonl"), manifest);
}

TEST_F(TempDir, CraftSingleTargetToExplicitPath) {
    ASSERT_EQ(pcst_run({"synth", "--out-dir", at("b"), "--height", "24", "--width", "24", "--sigma", "5", "--frames", "3"}).code, 0);
    const RunResult r = pcst_run({"craft", "--burst-dir", at("b/burst_00"), "--patch-size", "4", "--search-box", "5",
                                  "--out", at("t.pcrf")});
    ASSERT_EQ(r.code, 0) << r.err;
    const Tensor t = load_tensor(dir / "t.pcrf");
    EXPECT_EQ(t.shape, (std::vector<std::uint32_t>{1, 24, 24}));
    EXPECT_EQ(pcst_run({"craft", "--burst-dir", at("b/burst_00"), "--targets", "2", "--out", at("t.pcrf")}).code, 2);
}
