#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace podmix;

namespace {

SeparationMetrics row(const std::string& track, const std::string& source, double sdr) {
  SeparationMetrics m;
  m.track_id = track;
  m.source = source;
  m.sdr = sdr;
  m.sir = sdr + 1;
  m.sar = sdr + 2;
  m.si_sdr = sdr - 1;
  return m;
}

AggregateEntry entry(std::string set, std::string system, std::string source, std::string metric,
                     double mean, double std, std::size_t count) {
  AggregateEntry e{std::move(set), std::move(system), std::move(source), std::move(metric)};
  e.mean = mean;
  e.std = std;
  e.count = count;
  return e;
}

}  // namespace

TEST(Aggregate, MeanAndPopulationStd) {
  const AggregateReport r = aggregate({row("a", "speech", 10), row("b", "speech", 14)}, "s", "sys");
  const AggregateEntry* sdr = r.find("s", "sys", "speech", "SDR");
  ASSERT_NE(sdr, nullptr);
  EXPECT_EQ(sdr->mean, 12.0);
  EXPECT_EQ(sdr->std, 2.0);
  EXPECT_EQ(sdr->count, 2u);
  EXPECT_EQ(r.find("s", "sys", "music", "SDR"), nullptr);
}

TEST(Aggregate, SingleRowIdentity) {
  const AggregateReport r = aggregate({row("a", "speech", 12.2)}, "s", "sys");
  EXPECT_EQ(r.find("s", "sys", "speech", "SDR")->mean, 12.2);
}

TEST(Aggregate, InfiniteValuesAreCountedSeparately) {
  const AggregateReport r = aggregate({row("a", "speech", kInf), row("b", "speech", 10)}, "s", "x");
  const AggregateEntry* sdr = r.find("s", "x", "speech", "SDR");
  EXPECT_EQ(sdr->mean, 10.0);
  EXPECT_EQ(sdr->infinite_count, 1u);
  const AggregateReport all_inf = aggregate({row("a", "music", kInf)}, "s", "x");
  EXPECT_TRUE(all_inf.find("s", "x", "music", "SDR")->flagged());
  EXPECT_EQ(format_cell(*all_inf.find("s", "x", "music", "SDR")), "inf");
  EXPECT_THROW(aggregate({}, "s", "x"), Error);
}

TEST(Aggregate, MatchesBruteForceMeanOverCsv) {
  std::vector<SeparationMetrics> rows;
  for (int i = 0; i < 37; ++i) rows.push_back(row("t" + std::to_string(i), "music", 0.37 * i - 4.1));
  std::stringstream csv;
  write_metrics_csv(csv, rows);
  double sum = 0.0;
  int n = 0;
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    const auto third = line.find(',', second + 1);
    sum += std::stod(line.substr(second + 1, third - second - 1));
    ++n;
  }
  EXPECT_NEAR(aggregate(rows, "s", "x").find("s", "x", "music", "SDR")->mean, sum / n, 1e-12);
}

TEST(Render, ReferenceCellValuesFormatExactly) {
  AggregateReport r;
  r.entries.push_back(entry("real-with-reference", "U-Net", "speech", "SDR", 12.2, 0.0, 7));
  r.entries.push_back(entry("real-no-reference", "U-Net", "speech", "OVRL", 3.84, 0.88, 210));
  r.entries.push_back(entry("real-with-reference", "U-Net", "music", "SDR", 2.9, 0.0, 7));
  r.entries.push_back(entry("real-with-reference", "Conv-TasNet", "music", "SDR", -8.7, 0.0, 7));
  const std::string md = render_markdown(r);
  for (const char* s : {"12.2 dB", "3.84\xC2\xB1" "0.88", "2.9 dB", "-8.7 dB"}) {
    EXPECT_NE(md.find(s), std::string::npos) << s << "\n" << md;
  }
  EXPECT_NE(md.find("| U-Net | 12.2 dB |"), std::string::npos) << md;
  EXPECT_NE(md.find("SDR (\xE2\x86\x91)"), std::string::npos);
}

TEST(Render, ObjectiveOnlyReportHasNoOpinionColumns) {
  const std::string md = render_markdown(aggregate({row("a", "speech", 1)}, "synth-test", "IRM"));
  EXPECT_EQ(md.find("OVRL"), std::string::npos);
  EXPECT_NE(md.find("SI-SDR"), std::string::npos);
}

TEST(Render, MissingCellsShowDash) {
  AggregateReport r;
  r.entries.push_back(entry("s", "A", "speech", "SDR", 1.0, 0.0, 1));
  r.entries.push_back(entry("s", "B", "speech", "SIR", 2.0, 0.0, 1));
  EXPECT_NE(render_markdown(r).find("| A | 1.0 dB | - |"), std::string::npos) << render_markdown(r);
}

TEST(ReportCsv, RoundTrips) {
  AggregateReport r = aggregate({row("a", "speech", 3), row("b", "speech", kInf),
                                 row("a", "music", kInf)}, "synth-test", "sys,with comma");
  r.entries.push_back(entry("real-no-reference", "sys", "speech", "OVRL", 3.84, 0.88, 10));
  std::istringstream in(render_csv(r));
  EXPECT_EQ(parse_report_csv(in), r);
}

TEST(ReportFormat, ParsesNamesAndRejectsEmpty) {
  EXPECT_EQ(parse_report_format("markdown-table"), ReportFormat::kMarkdown);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::kCsv);
  EXPECT_THROW(parse_report_format("xlsx"), Error);
  EXPECT_THROW(emit_report(AggregateReport{}, ReportFormat::kCsv), Error);
  const auto json = nlohmann::json::parse(
      emit_report(aggregate({row("a", "music", kInf)}, "s", "x"), ReportFormat::kJson));
  EXPECT_TRUE(json[0]["mean"].is_null());
  EXPECT_EQ(json[0]["infinite_count"], 1);
}

TEST(FormatMos, TwoDecimals) {
  EXPECT_EQ(format_mos(3.0, 0.0), "3.00\xC2\xB1" "0.00");
  EXPECT_EQ(format_db(-8.66), "-8.7 dB");
}
