#include <algorithm>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "podmix/podmix.hpp"
#include "podmix/listening_server.hpp"
#include "podmix/synthetic.hpp"

namespace fs = std::filesystem;
using namespace podmix;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailures = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

SourceManifest load_partitioned(const fs::path& path, SourceKind kind, std::uint64_t seed,
                                const PartitionFractions& fractions, std::uint64_t salt) {
  SourceManifest m = read_manifest_csv(path, kind);
  if (m.fully_partitioned()) return m;
  SplitMix64 rng(derive_stream_seed(seed, salt));
  return partition_manifest(m, fractions, rng);
}

// Partition seeds live far from record indices so the streams never collide.
constexpr std::uint64_t kSpeechPartitionSalt = 0xFFFF'FFFF'0000'0001ull;
constexpr std::uint64_t kMusicPartitionSalt = 0xFFFF'FFFF'0000'0002ull;

int write_errors(const fs::path& out_dir, const std::vector<TrackError>& errors) {
  if (errors.empty()) return kExitOk;
  write_text(out_dir / "errors.json", errors_to_json(errors).dump(2) + "\n");
  for (const auto& e : errors) {
    std::cerr << "error: " << e.track_id << " [" << e.stage << "]: " << e.message << '\n';
  }
  return kExitFailures;
}

// ---------------------------------------------------------------------------

struct MixArgs {
  fs::path speech, music, out, config;
  std::uint64_t seed = 0;
  std::optional<std::size_t> count;
  std::optional<double> duration;
  unsigned jobs = 1;
};

int run_mix(const MixArgs& a) {
  MixConfig config;
  if (!a.config.empty()) config = parse_mix_config(read_json(a.config));
  if (a.count) config.counts = {{Partition::kTest, *a.count}};
  if (a.duration) config = parse_mix_config(nlohmann::json{{"duration_s", *a.duration}}, config);
  const SourceManifest speech =
      load_partitioned(a.speech, SourceKind::kSpeech, a.seed, kSpeechFractions, kSpeechPartitionSalt);
  const SourceManifest music =
      load_partitioned(a.music, SourceKind::kMusic, a.seed, kMusicFractions, kMusicPartitionSalt);
  const DatasetRun run =
      write_dataset(a.out, speech, music, config, a.seed, make_wav_loader(), a.jobs);
  std::cout << "wrote " << run.recipes.size() << " records to " << a.out.string() << '\n';
  if (run.errors.empty()) return kExitOk;
  nlohmann::ordered_json errors = nlohmann::ordered_json::array();
  for (const auto& e : run.errors) {
    errors.push_back({{"record_id", e.record_id}, {"stage", "mix"}, {"message", e.message}});
    std::cerr << "error: " << e.message << '\n';
  }
  write_text(a.out / "errors.json", errors.dump(2) + "\n");
  return kExitFailures;
}

struct RenderArgs {
  fs::path recipe, speech, music, out;
};

int run_render(const RenderArgs& a) {
  const MixRecipe recipe = read_recipe(a.recipe);
  const SourceManifest speech = read_manifest_csv(a.speech, SourceKind::kSpeech);
  const SourceManifest music = read_manifest_csv(a.music, SourceKind::kMusic);
  const MixResult audio = render_recipe(recipe, speech, music, make_wav_loader());
  fs::create_directories(a.out);
  write_record_files(a.out, GeneratedRecord{recipe, audio});
  std::cout << "rendered " << recipe.record_id << '\n';
  return kExitOk;
}

struct OracleArgs {
  fs::path set, out;
  std::string mask = "irm";
  bool combine = false;
  bool complementary = false;
  unsigned jobs = 1;
};

int run_oracle_cmd(const OracleArgs& a) {
  OracleOptions options;
  if (a.mask == "irm") {
    options.mask_kind = MaskKind::kIrm;
  } else if (a.mask == "ibm") {
    options.mask_kind = MaskKind::kIbm;
  } else {
    throw UsageError("--mask must be irm or ibm");
  }
  options.combine = a.combine;
  options.combine_options.complementary_music_mask = a.complementary;
  std::vector<TrackError> errors;
  const EvalSet out = run_oracle(read_eval_set(a.set), options, a.out, errors, a.jobs);
  write_text(a.out / "evalset_oracle.json", to_json(out, a.out).dump(2) + "\n");
  std::cout << "wrote oracle estimates for " << out.tracks.size() - errors.size() << " tracks\n";
  return write_errors(a.out, errors);
}

struct EvalArgs {
  fs::path set, out;
  std::string system = "system";
  std::string format = "markdown";
  std::size_t filter_length = kDefaultFilterLength;
  bool baseline = false;
  unsigned jobs = 1;
};

int run_eval(const EvalArgs& a) {
  const ReportFormat format = parse_report_format(a.format);
  const EvalSet set = read_eval_set(a.set);
  if (!has_references(set)) {
    std::cerr << "error: set '" << set.name
              << "' has no reference stems, so objective metrics are unavailable.\n"
                 "Collect subjective ratings with `podmix serve-test` and summarize them with "
                 "`podmix report-mos`.\n";
    return kExitFailures;
  }
  const EvaluationRun run = run_evaluation(set, a.system, a.filter_length, a.jobs);
  for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';

  AggregateReport report;
  if (!run.rows.empty()) {
    report = aggregate(run.rows, run.set, run.system);
    if (a.baseline) report.merge(aggregate(run.baseline, run.set, "mixture"));
  }
  const std::string text = report.entries.empty() ? std::string() : emit_report(report, format);
  if (a.out.empty()) {
    std::cout << text;
  } else {
    fs::create_directories(a.out);
    std::ostringstream rows;
    write_metrics_csv(rows, run.rows);
    write_text(a.out / "metrics.csv", rows.str());
    if (a.baseline) {
      std::ostringstream base;
      write_metrics_csv(base, run.baseline);
      write_text(a.out / "metrics_mixture.csv", base.str());
    }
    if (!text.empty()) write_text(a.out / ("report." + report_extension(format)), text);
    std::cout << text;
  }
  if (run.errors.empty()) return kExitOk;
  if (!a.out.empty()) return write_errors(a.out, run.errors);
  for (const auto& e : run.errors) {
    std::cerr << "error: " << e.track_id << " [" << e.stage << "]: " << e.message << '\n';
  }
  return kExitFailures;
}

struct ServeArgs {
  fs::path config, ratings, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

httplib::Server* g_server = nullptr;

int run_serve(const ServeArgs& a) {
  listening::RatingStore store(a.ratings);
  listening::ListeningTestService service(listening::read_test_config(a.config), store);
  httplib::Server server;
  listening::mount_routes(server, service,
                          a.static_dir.empty() ? std::nullopt : std::optional(a.static_dir));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening on http://" << a.host << ":" << a.port << '\n' << std::flush;
  if (!server.listen(a.host, a.port)) {
    throw Error(ErrorKind::kIo, "cannot listen on " + a.host + ":" + std::to_string(a.port));
  }
  return kExitOk;
}

struct ReportMosArgs {
  fs::path config, ratings, out;
  std::vector<fs::path> merge;
  std::string format = "markdown";
};

int run_report_mos(const ReportMosArgs& a) {
  const ReportFormat format = parse_report_format(a.format);
  const listening::TestConfig config = listening::read_test_config(a.config);
  const listening::RatingStore store(a.ratings);
  const listening::MosSummary summary = listening::compute_mos(store.snapshot(), config);
  for (const auto& note : summary.notes) std::cerr << "note: " << note << '\n';
  AggregateReport report;
  for (const auto& path : a.merge) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
    report.merge(parse_report_csv(in));
  }
  report.merge(listening::to_report(summary));
  const std::string text = emit_report(report, format);
  if (!a.out.empty()) write_text(a.out, text);
  std::cout << text;
  return kExitOk;
}

struct DemoCorpusArgs {
  fs::path out;
  std::uint64_t seed = 0;
  synthetic::CorpusOptions options;
};

int run_demo_corpus(const DemoCorpusArgs& a) {
  synthetic::write_corpus(a.out, a.options, a.seed);
  std::cout << "wrote speech.csv and music.csv under " << a.out.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"podmix: podcast speech/music mixing, separation and evaluation"};
  app.require_subcommand(1);

  MixArgs mix_args;
  auto* mix_cmd = app.add_subcommand("mix", "generate a seeded speech/music mixture dataset");
  mix_cmd->add_option("--speech", mix_args.speech, "speech manifest CSV")->required();
  mix_cmd->add_option("--music", mix_args.music, "music manifest CSV")->required();
  mix_cmd->add_option("--out", mix_args.out, "output directory")->required();
  mix_cmd->add_option("--seed", mix_args.seed, "master seed");
  mix_cmd->add_option("--config", mix_args.config, "mix config JSON");
  mix_cmd->add_option("--count", mix_args.count, "number of test records (overrides config)");
  mix_cmd->add_option("--duration", mix_args.duration, "mixture length in seconds");
  mix_cmd->add_option("--jobs", mix_args.jobs, "worker threads")->check(CLI::PositiveNumber);

  RenderArgs render_args;
  auto* render_cmd = app.add_subcommand("render", "re-render one record from its recipe");
  render_cmd->add_option("recipe", render_args.recipe, "recipe JSON")->required();
  render_cmd->add_option("--speech", render_args.speech, "speech manifest CSV")->required();
  render_cmd->add_option("--music", render_args.music, "music manifest CSV")->required();
  render_cmd->add_option("--out", render_args.out, "output directory")->required();

  OracleArgs oracle_args;
  auto* oracle_cmd = app.add_subcommand("oracle", "oracle-mask separation over an evaluation set");
  oracle_cmd->add_option("--set", oracle_args.set, "evaluation set JSON")->required();
  oracle_cmd->add_option("--out", oracle_args.out, "output directory")->required();
  oracle_cmd->add_option("--mask", oracle_args.mask, "irm or ibm");
  oracle_cmd->add_flag("--combine", oracle_args.combine, "normalize the two masks jointly");
  oracle_cmd->add_flag("--complementary", oracle_args.complementary,
                       "with --combine, music mask = 1 - combined speech mask");
  oracle_cmd->add_option("--jobs", oracle_args.jobs, "worker threads")->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "objective metrics over an evaluation set");
  eval_cmd->add_option("--set", eval_args.set, "evaluation set JSON with estimates")->required();
  eval_cmd->add_option("--system", eval_args.system, "system name for the report");
  eval_cmd->add_option("--out", eval_args.out, "output directory");
  eval_cmd->add_option("--format", eval_args.format, "csv, json or markdown");
  eval_cmd->add_option("--filter-length", eval_args.filter_length, "BSS_eval filter length")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--baseline", eval_args.baseline, "also score the mixture as estimate");
  eval_cmd->add_option("--jobs", eval_args.jobs, "worker threads")->check(CLI::PositiveNumber);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve-test", "run the listening-test HTTP service");
  serve_cmd->add_option("--config", serve_args.config, "listening test config JSON")->required();
  serve_cmd->add_option("--ratings", serve_args.ratings, "ratings JSONL file")->required();
  serve_cmd->add_option("--static", serve_args.static_dir, "directory served at /");
  serve_cmd->add_option("--host", serve_args.host, "bind address");
  serve_cmd->add_option("--port", serve_args.port, "port");

  ReportMosArgs mos_args;
  auto* mos_cmd = app.add_subcommand("report-mos", "mean opinion scores from stored ratings");
  mos_cmd->add_option("--config", mos_args.config, "listening test config JSON")->required();
  mos_cmd->add_option("--ratings", mos_args.ratings, "ratings JSONL file")->required();
  mos_cmd->add_option("--merge", mos_args.merge, "report CSVs to merge into the table");
  mos_cmd->add_option("--format", mos_args.format, "csv, json or markdown");
  mos_cmd->add_option("--out", mos_args.out, "output file");

  DemoCorpusArgs demo_args;
  auto* demo_cmd = app.add_subcommand("demo-corpus", "write a small synthetic source corpus");
  demo_cmd->add_option("--out", demo_args.out, "output directory")->required();
  demo_cmd->add_option("--seed", demo_args.seed, "seed");
  demo_cmd->add_option("--speakers", demo_args.options.speakers, "number of speakers");
  demo_cmd->add_option("--artists", demo_args.options.artists, "number of artists");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*mix_cmd) return run_mix(mix_args);
    if (*render_cmd) return run_render(render_args);
    if (*oracle_cmd) return run_oracle_cmd(oracle_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*serve_cmd) return run_serve(serve_args);
    if (*mos_cmd) return run_report_mos(mos_args);
    if (*demo_cmd) return run_demo_corpus(demo_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return e.kind() == ErrorKind::kParameter ? kExitUsage : kExitFailures;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailures;
  }
  return kExitUsage;
}
