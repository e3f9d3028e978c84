#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "podmix/error.hpp"
#include "podmix/metrics.hpp"

namespace podmix {

/// Objective metrics come first in every table, then opinion scores.
inline const std::vector<std::string>& metric_order() {
  static const std::vector<std::string> order{"SDR", "SIR", "SAR", "SI-SDR",
                                              "OVRL", "SIG", "BAK"};
  return order;
}

inline bool is_opinion_metric(const std::string& metric) {
  return metric == "OVRL" || metric == "SIG" || metric == "BAK";
}

struct AggregateEntry {
  std::string set;
  std::string system;
  std::string source;
  std::string metric;
  double mean = std::numeric_limits<double>::quiet_NaN();  // NaN when flagged
  double std = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;           // finite values
  std::size_t infinite_count = 0;

  bool flagged() const { return count == 0; }
  bool operator==(const AggregateEntry& o) const {
    auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return set == o.set && system == o.system && source == o.source && metric == o.metric &&
           same(mean, o.mean) && same(std, o.std) && count == o.count &&
           infinite_count == o.infinite_count;
  }
};

/// Mean and spread per (set, system, source, metric). Entries keep insertion
/// order, which fixes the row order of rendered tables.
struct AggregateReport {
  std::vector<AggregateEntry> entries;

  void merge(const AggregateReport& other) {
    entries.insert(entries.end(), other.entries.begin(), other.entries.end());
  }

  const AggregateEntry* find(const std::string& set, const std::string& system,
                             const std::string& source, const std::string& metric) const {
    for (const auto& e : entries) {
      if (e.set == set && e.system == system && e.source == source && e.metric == metric) {
        return &e;
      }
    }
    return nullptr;
  }

  bool operator==(const AggregateReport&) const = default;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and population standard deviation (divide by n).
inline MeanStd mean_and_pstd(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / n;
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / n);
  return out;
}

inline AggregateEntry summarize(std::string set, std::string system, std::string source,
                                std::string metric, const std::vector<double>& values) {
  AggregateEntry e{std::move(set), std::move(system), std::move(source), std::move(metric)};
  std::vector<double> finite;
  for (double v : values) {
    if (std::isnan(v)) continue;
    if (std::isinf(v)) {
      ++e.infinite_count;
    } else {
      finite.push_back(v);
    }
  }
  e.count = finite.size();
  if (!finite.empty()) {
    const auto ms = mean_and_pstd(finite);
    e.mean = ms.mean;
    e.std = ms.std;
  }
  return e;
}

/// Aggregates per-track rows of one (set, system). Infinite values are
/// counted, not averaged; a group with no finite value is flagged with no
/// mean. Metrics that were never computed (NaN) produce no entry.
inline AggregateReport aggregate(const std::vector<SeparationMetrics>& rows,
                                 const std::string& set, const std::string& system) {
  if (rows.empty()) throw Error(ErrorKind::kEmptyInput, "nothing to aggregate");
  AggregateReport report;
  for (const char* source : kSourceNames) {
    std::map<std::string, std::vector<double>> values;
    bool any = false;
    for (const auto& r : rows) {
      if (r.source != source) continue;
      any = true;
      values["SDR"].push_back(r.sdr);
      values["SIR"].push_back(r.sir);
      values["SAR"].push_back(r.sar);
      values["SI-SDR"].push_back(r.si_sdr);
    }
    if (!any) continue;
    for (const auto& metric : metric_order()) {
      auto it = values.find(metric);
      if (it == values.end()) continue;
      const bool all_nan = std::all_of(it->second.begin(), it->second.end(),
                                       [](double v) { return std::isnan(v); });
      if (all_nan) continue;
      report.entries.push_back(summarize(set, system, source, metric, it->second));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string format_db(double v) {
  if (std::isinf(v)) return v > 0 ? "inf dB" : "-inf dB";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f dB", v);
  return buf;
}

inline std::string format_mos(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f\xC2\xB1%.2f", mean, std);  // U+00B1
  return buf;
}

inline std::string format_cell(const AggregateEntry& e) {
  if (e.flagged()) return e.infinite_count > 0 ? "inf" : "-";
  return is_opinion_metric(e.metric) ? format_mos(e.mean, e.std) : format_db(e.mean);
}

/// One table per (set, source), rows per system, columns per metric present.
/// Opinion-score columns only appear when MOS entries exist.
inline std::string render_markdown(const AggregateReport& report) {
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& e : report.entries) {
    const std::pair key{e.set, e.source};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& [set, source] : groups) {
    std::vector<std::string> systems;
    std::vector<std::string> metrics;
    for (const auto& e : report.entries) {
      if (e.set != set || e.source != source) continue;
      if (std::find(systems.begin(), systems.end(), e.system) == systems.end()) {
        systems.push_back(e.system);
      }
    }
    for (const auto& m : metric_order()) {
      for (const auto& e : report.entries) {
        if (e.set == set && e.source == source && e.metric == m) {
          metrics.push_back(m);
          break;
        }
      }
    }
    if (!first) out << '\n';
    first = false;
    out << "### " << set << " / " << source << "\n\n|  |";
    for (const auto& m : metrics) out << ' ' << m << " (\xE2\x86\x91) |";
    out << "\n|---|";
    for (std::size_t i = 0; i < metrics.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& system : systems) {
      out << "| " << system << " |";
      for (const auto& m : metrics) {
        const AggregateEntry* e = report.find(set, system, source, m);
        out << ' ' << (e ? format_cell(*e) : std::string("-")) << " |";
      }
      out << '\n';
    }
  }
  return out.str();
}

inline constexpr std::string_view kReportCsvHeader =
    "set,system,source,metric,mean,std,count,infinite_count";

inline std::string render_csv(const AggregateReport& report) {
  std::ostringstream out;
  out << kReportCsvHeader << '\n';
  for (const auto& e : report.entries) {
    out << detail::csv_escape(e.set) << ',' << detail::csv_escape(e.system) << ','
        << detail::csv_escape(e.source) << ',' << detail::csv_escape(e.metric) << ','
        << format_number(e.mean) << ',' << format_number(e.std) << ',' << e.count << ','
        << e.infinite_count << '\n';
  }
  return out.str();
}

/// Inverse of render_csv.
inline AggregateReport parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) {
    throw Error(ErrorKind::kFormat, "report CSV header must be '" +
                                        std::string(kReportCsvHeader) + "'");
  }
  AggregateReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 8) throw Error(ErrorKind::kFormat, "report CSV row needs 8 fields");
    AggregateEntry e{f[0], f[1], f[2], f[3]};
    e.mean = parse_number(f[4]);
    e.std = parse_number(f[5]);
    e.count = static_cast<std::size_t>(std::stoull(f[6]));
    e.infinite_count = static_cast<std::size_t>(std::stoull(f[7]));
    report.entries.push_back(std::move(e));
  }
  return report;
}

inline nlohmann::ordered_json report_to_json(const AggregateReport& report) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json j{{"set", e.set},       {"system", e.system},
                             {"source", e.source}, {"metric", e.metric}};
    j["mean"] = e.flagged() ? nlohmann::ordered_json(nullptr) : number_json(e.mean);
    j["std"] = e.flagged() ? nlohmann::ordered_json(nullptr) : number_json(e.std);
    j["count"] = e.count;
    j["infinite_count"] = e.infinite_count;
    if (e.flagged()) j["flagged"] = "no finite values";
    arr.push_back(std::move(j));
  }
  return arr;
}

enum class ReportFormat { kCsv, kJson, kMarkdown };

inline ReportFormat parse_report_format(const std::string& text) {
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "json") return ReportFormat::kJson;
  if (text == "markdown" || text == "md" || text == "markdown-table") return ReportFormat::kMarkdown;
  throw Error(ErrorKind::kParameter, "unknown report format '" + text + "'");
}

inline std::string report_extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::kCsv: return "csv";
    case ReportFormat::kJson: return "json";
    case ReportFormat::kMarkdown: return "md";
  }
  return "txt";
}

inline std::string emit_report(const AggregateReport& report, ReportFormat format) {
  if (report.entries.empty()) throw Error(ErrorKind::kEmptyInput, "empty report");
  switch (format) {
    case ReportFormat::kCsv: return render_csv(report);
    case ReportFormat::kJson: return report_to_json(report).dump(2) + "\n";
    case ReportFormat::kMarkdown: return render_markdown(report);
  }
  return {};
}

}  // namespace podmix
