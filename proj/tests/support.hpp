#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "podmix/podmix.hpp"
#include "podmix/synthetic.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "podmix-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> x(n);
  for (auto& v : x) v = dist(gen);
  return x;
}

inline std::vector<float> gaussian_f(std::size_t n, std::uint64_t seed, double scale = 0.1) {
  const auto d = gaussian(n, seed, scale);
  return {d.begin(), d.end()};
}

inline double norm2(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

/// Small synthetic corpus shared by the tests of one binary.
struct SharedCorpus {
  TempDir dir;
  podmix::synthetic::Corpus raw;
  podmix::SourceManifest speech;
  podmix::SourceManifest music;

  explicit SharedCorpus(const podmix::synthetic::CorpusOptions& options, std::uint64_t seed = 7)
      : raw(podmix::synthetic::write_corpus(dir.path(), options, seed)),
        speech(partitioned(raw.speech, podmix::kSpeechFractions, seed + 1)),
        music(partitioned(raw.music, podmix::kMusicFractions, seed + 2)) {}

  static podmix::SourceManifest partitioned(const podmix::SourceManifest& m,
                                            const podmix::PartitionFractions& f,
                                            std::uint64_t seed) {
    podmix::SplitMix64 rng(seed);
    return podmix::partition_manifest(m, f, rng);
  }
};

inline const SharedCorpus& small_corpus() {
  static const SharedCorpus corpus([] {
    podmix::synthetic::CorpusOptions o;
    o.speakers = 30;
    o.files_per_speaker = 2;
    o.artists = 12;
    o.songs_per_artist = 1;
    o.song_s = 5.0;
    return o;
  }());
  return corpus;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

inline CliResult run_cli(const std::vector<std::string>& args) {
  TempDir scratch;
  std::string cmd = shell_quote(PODMIX_CLI);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote((scratch / "out.txt").string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(scratch / "out.txt");
  return r;
}

/// Relative path -> bytes for every regular file under `root`.
inline std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[fs::relative(e.path(), root).string()] = read_file(e.path());
    }
  }
  return files;
}

}  // namespace testsupport
