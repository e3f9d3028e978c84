#include <gtest/gtest.h>

#include "support.hpp"

using testsupport::run_cli;
using testsupport::TempDir;

namespace {

std::vector<std::string> mix_args(const TempDir& out, const std::string& jobs = "1") {
  const auto& corpus = testsupport::small_corpus();
  return {"mix",        "--speech", (corpus.dir / "speech.csv").string(),
          "--music",    (corpus.dir / "music.csv").string(),
          "--out",      out.path().string(),
          "--seed",     "42",
          "--count",    "6",
          "--duration", "3",
          "--jobs",     jobs};
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({"frobnicate"}).exit_code, 2);
  EXPECT_EQ(run_cli({}).exit_code, 2);
  EXPECT_EQ(run_cli({"mix", "--speech", "x.csv"}).exit_code, 2);
  EXPECT_EQ(run_cli({"--help"}).exit_code, 0);
}

TEST(Cli, MixIsReproducibleAcrossRunsAndJobs) {
  TempDir a, b;
  const auto ra = run_cli(mix_args(a));
  ASSERT_EQ(ra.exit_code, 0) << ra.output;
  ASSERT_EQ(run_cli(mix_args(b, "3")).exit_code, 0);
  const auto ta = testsupport::snapshot_tree(a.path());
  EXPECT_EQ(ta, testsupport::snapshot_tree(b.path()));
  EXPECT_TRUE(ta.count("test-000000_mix.wav"));
  EXPECT_TRUE(ta.count("test-000005.json"));
  EXPECT_TRUE(ta.count("evalset_synth-test.json"));
}

TEST(Cli, RenderReproducesRecord) {
  TempDir data, again;
  ASSERT_EQ(run_cli(mix_args(data)).exit_code, 0);
  const auto& corpus = testsupport::small_corpus();
  const auto r = run_cli({"render", (data / "test-000002.json").string(), "--speech",
                          (corpus.dir / "speech.csv").string(), "--music",
                          (corpus.dir / "music.csv").string(), "--out", again.path().string()});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const char* suffix : {"_mix.wav", "_speech.wav", "_music.wav"}) {
    EXPECT_EQ(testsupport::read_file(data / (std::string("test-000002") + suffix)),
              testsupport::read_file(again / (std::string("test-000002") + suffix)))
        << suffix;
  }
}

TEST(Cli, OracleThenEvalAtTwoFilterLengths) {
  TempDir data, oracle, short_eval, long_eval;
  ASSERT_EQ(run_cli(mix_args(data)).exit_code, 0);
  auto r = run_cli({"oracle", "--set", (data / "evalset_synth-test.json").string(), "--out",
                    oracle.path().string()});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const std::string set = (oracle / "evalset_oracle.json").string();

  r = run_cli({"eval", "--set", set, "--system", "IRM", "--filter-length", "1", "--out",
               short_eval.path().string(), "--format", "csv"});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run_cli({"eval", "--set", set, "--system", "IRM", "--out", long_eval.path().string(),
               "--baseline"});
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const auto short_csv = testsupport::read_file(short_eval / "metrics.csv");
  const auto long_csv = testsupport::read_file(long_eval / "metrics.csv");
  EXPECT_EQ(short_csv.rfind("track_id,source,sdr,sir,sar,si_sdr,filter_length\n", 0), 0u);
  EXPECT_NE(short_csv.find(",1\n"), std::string::npos);
  EXPECT_EQ(short_csv.find(",512\n"), std::string::npos);
  EXPECT_NE(long_csv.find(",512\n"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(short_eval / "report.csv"));
  const auto md = testsupport::read_file(long_eval / "report.md");
  EXPECT_NE(md.find("IRM"), std::string::npos);
  EXPECT_NE(md.find("mixture"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(long_eval / "metrics_mixture.csv"));
}

TEST(Cli, EvalWithoutReferencesPointsToListeningTest) {
  TempDir dir;
  podmix::write_wav(dir / "m.wav",
                    podmix::AudioBuffer::mono(testsupport::gaussian_f(800, 1), 8000));
  std::ofstream(dir / "set.json")
      << R"({"name":"real-no-reference","tracks":[{"track_id":"ep1","mixture":"m.wav"}]})";
  const auto r = run_cli({"eval", "--set", (dir / "set.json").string()});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("serve-test"), std::string::npos);
  EXPECT_NE(r.output.find("report-mos"), std::string::npos);
}

TEST(Cli, BadParametersExitTwo) {
  TempDir data;
  ASSERT_EQ(run_cli(mix_args(data)).exit_code, 0);
  const std::string set = (data / "evalset_synth-test.json").string();
  EXPECT_EQ(run_cli({"oracle", "--set", set, "--out", (data / "o").string(), "--mask", "soft"})
                .exit_code,
            2);
  EXPECT_EQ(run_cli({"eval", "--set", set, "--format", "pdf"}).exit_code, 2);
  EXPECT_EQ(run_cli({"mix", "--speech", "a", "--music", "b", "--out", "c", "--jobs", "0"})
                .exit_code,
            2);
}

TEST(Cli, ReportMosMergesObjectiveReport) {
  TempDir dir;
  for (const char* name : {"mix", "est"}) {
    podmix::write_wav(dir / (std::string(name) + ".wav"),
                      podmix::AudioBuffer::mono(testsupport::gaussian_f(800, 2), 8000));
  }
  std::ofstream(dir / "test.json") << R"({
    "conditions": ["U-Net"],
    "training_excerpt_id": "t",
    "excerpts": [
      {"excerpt_id": "t", "mixture": "mix.wav", "estimates": {"U-Net": "est.wav"}},
      {"excerpt_id": "a", "mixture": "mix.wav", "estimates": {"U-Net": "est.wav"}}
    ]})";
  {
    std::ofstream ratings(dir / "ratings.jsonl");
    for (int v : {5, 4, 3}) {
      podmix::listening::RatingRecord r;
      r.session_id = "s" + std::to_string(v);
      r.excerpt_id = "a";
      r.condition = "U-Net";
      r.source_type = "speech";
      r.metric = "OVRL";
      r.value = v;
      r.scored = true;
      ratings << podmix::listening::to_json(r).dump() << '\n';
    }
  }
  std::ofstream(dir / "obj.csv") << podmix::kReportCsvHeader << '\n'
                                 << "synth-test,U-Net,speech,SDR,12.2,0,10,0\n";
  const auto r = run_cli({"report-mos", "--config", (dir / "test.json").string(), "--ratings",
                          (dir / "ratings.jsonl").string(), "--merge",
                          (dir / "obj.csv").string(), "--out", (dir / "table.md").string()});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto table = testsupport::read_file(dir / "table.md");
  EXPECT_NE(table.find("4.00\xC2\xB1" "0.82"), std::string::npos) << table;
  EXPECT_NE(table.find("12.2 dB"), std::string::npos) << table;
}
