#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "podmix/audio.hpp"
#include "podmix/error.hpp"
#include "podmix/metrics.hpp"
#include "podmix/parallel.hpp"
#include "podmix/report.hpp"
#include "podmix/separation.hpp"

namespace podmix {

inline constexpr std::string_view kSynthTest = "synth-test";
inline constexpr std::string_view kRealWithReference = "real-with-reference";
inline constexpr std::string_view kRealNoReference = "real-no-reference";

struct EvalTrack {
  std::string track_id;
  std::filesystem::path mixture;
  std::optional<std::filesystem::path> speech_ref;
  std::optional<std::filesystem::path> music_ref;
  std::optional<std::filesystem::path> speech_est;
  std::optional<std::filesystem::path> music_est;
};

struct EvalSet {
  std::string name;
  std::vector<EvalTrack> tracks;
};

inline bool has_references(const EvalSet& set) { return set.name != kRealNoReference; }

inline EvalSet eval_set_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  EvalSet set;
  try {
    set.name = j.at("name").get<std::string>();
    if (set.name != kSynthTest && set.name != kRealWithReference && set.name != kRealNoReference) {
      throw Error(ErrorKind::kFormat, "unknown evaluation set name '" + set.name + "'");
    }
    auto path_of = [&](const nlohmann::json& t, const char* key) {
      std::optional<std::filesystem::path> out;
      if (t.contains(key) && !t.at(key).is_null()) {
        std::filesystem::path p = t.at(key).get<std::string>();
        out = p.is_absolute() ? p : base / p;
      }
      return out;
    };
    for (const auto& t : j.at("tracks")) {
      EvalTrack track;
      track.track_id = t.at("track_id").get<std::string>();
      track.mixture = *path_of(t, "mixture");
      track.speech_ref = path_of(t, "speech_ref");
      track.music_ref = path_of(t, "music_ref");
      track.speech_est = path_of(t, "speech_est");
      track.music_est = path_of(t, "music_est");
      if (set.name == kRealNoReference && (track.speech_ref || track.music_ref)) {
        throw Error(ErrorKind::kFormat,
                    "real-no-reference track '" + track.track_id + "' lists reference stems");
      }
      set.tracks.push_back(std::move(track));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed evaluation set: ") + e.what());
  }
  return set;
}

inline EvalSet read_eval_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open evaluation set " + path.string());
  try {
    return eval_set_from_json(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

/// With `relative_to`, paths are written relative to that directory, which is
/// what read_eval_set expects for a file stored there.
inline nlohmann::ordered_json to_json(const EvalSet& set,
                                      const std::filesystem::path& relative_to = {}) {
  const std::filesystem::path base =
      relative_to.empty() ? relative_to : std::filesystem::absolute(relative_to).lexically_normal();
  auto text = [&](const std::filesystem::path& p) {
    if (base.empty()) return p.string();
    return std::filesystem::absolute(p).lexically_normal().lexically_relative(base).string();
  };
  nlohmann::ordered_json tracks = nlohmann::ordered_json::array();
  for (const auto& t : set.tracks) {
    nlohmann::ordered_json j{{"track_id", t.track_id}, {"mixture", text(t.mixture)}};
    if (t.speech_ref) j["speech_ref"] = text(*t.speech_ref);
    if (t.music_ref) j["music_ref"] = text(*t.music_ref);
    if (t.speech_est) j["speech_est"] = text(*t.speech_est);
    if (t.music_est) j["music_est"] = text(*t.music_est);
    tracks.push_back(std::move(j));
  }
  return {{"name", set.name}, {"tracks", std::move(tracks)}};
}

struct TrackError {
  std::string track_id;
  std::string stage;
  std::string message;
};

struct EvaluationRun {
  std::string set;
  std::string system;
  std::vector<SeparationMetrics> rows;      // sorted by track_id, speech before music
  std::vector<SeparationMetrics> baseline;  // mixture-as-estimate, same order
  std::vector<TrackError> errors;
  std::vector<std::string> warnings;
};

inline constexpr double kTrimWarnFraction = 0.001;

namespace detail {

inline AudioBuffer load_mono_wav(const std::filesystem::path& path) {
  AudioBuffer b = read_wav(path);
  return b.channel_count() == 1 ? b : downmix_to_mono(b);
}

inline AudioBuffer truncate(const AudioBuffer& b, std::size_t frames) {
  std::vector<float> x(b.samples().begin(), b.samples().begin() + static_cast<std::ptrdiff_t>(frames));
  return AudioBuffer::mono(std::move(x), b.sample_rate());
}

}  // namespace detail

/// Evaluates every track of a with-reference set. Signals are truncated to
/// the shortest one (warning when more than 0.1% is dropped). Per-track
/// failures are collected; the sweep continues.
inline EvaluationRun run_evaluation(const EvalSet& set, const std::string& system,
                                    std::size_t filter_length = kDefaultFilterLength,
                                    unsigned jobs = 1) {
  if (!has_references(set)) {
    throw Error(ErrorKind::kUnsupportedEvaluation,
                "set '" + set.name +
                    "' has no reference stems; objective metrics are unavailable. Rate it "
                    "with the listening test instead (podmix serve-test).");
  }
  std::vector<EvalTrack> tracks = set.tracks;
  std::sort(tracks.begin(), tracks.end(),
            [](const EvalTrack& a, const EvalTrack& b) { return a.track_id < b.track_id; });

  struct Slot {
    std::optional<TrackEvaluation> result;
    std::optional<TrackError> error;
    std::optional<std::string> warning;
  };
  std::vector<Slot> slots(tracks.size());
  parallel_for(tracks.size(), jobs, [&](std::size_t i) {
    const EvalTrack& t = tracks[i];
    Slot& slot = slots[i];
    std::string stage = "load";
    try {
      if (!t.speech_ref || !t.music_ref) {
        throw Error(ErrorKind::kNotFound, "missing reference stem paths");
      }
      if (!t.speech_est || !t.music_est) {
        throw Error(ErrorKind::kNotFound, "missing estimate paths");
      }
      AudioBuffer signals[] = {
          detail::load_mono_wav(t.mixture),     detail::load_mono_wav(*t.speech_est),
          detail::load_mono_wav(*t.music_est),  detail::load_mono_wav(*t.speech_ref),
          detail::load_mono_wav(*t.music_ref)};
      stage = "align";
      std::size_t shortest = signals[0].frames(), longest = signals[0].frames();
      for (const auto& s : signals) {
        shortest = std::min(shortest, s.frames());
        longest = std::max(longest, s.frames());
      }
      if (shortest == 0) throw Error(ErrorKind::kAlignment, "empty signal");
      if (static_cast<double>(longest - shortest) > kTrimWarnFraction * static_cast<double>(longest)) {
        slot.warning = t.track_id + ": trimmed " + std::to_string(longest - shortest) +
                       " samples to align lengths";
      }
      for (auto& s : signals) {
        if (s.frames() != shortest) s = detail::truncate(s, shortest);
      }
      stage = "evaluate";
      slot.result = evaluate_track(t.track_id, signals[0], StemPair(signals[1], signals[2]),
                                   StemPair(signals[3], signals[4]), filter_length);
    } catch (const std::exception& e) {
      slot.error = TrackError{t.track_id, stage, e.what()};
    }
  });

  EvaluationRun run;
  run.set = set.name;
  run.system = system;
  for (auto& slot : slots) {
    if (slot.warning) run.warnings.push_back(std::move(*slot.warning));
    if (slot.error) run.errors.push_back(std::move(*slot.error));
    if (slot.result) {
      for (auto& r : slot.result->estimates) run.rows.push_back(std::move(r));
      for (auto& r : slot.result->mixture_baseline) run.baseline.push_back(std::move(r));
    }
  }
  return run;
}

inline nlohmann::ordered_json errors_to_json(const std::vector<TrackError>& errors) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : errors) {
    arr.push_back({{"track_id", e.track_id}, {"stage", e.stage}, {"message", e.message}});
  }
  return arr;
}

/// Writes oracle-mask estimates for every track of a with-reference set to
/// `{track_id}_speech_est.wav` / `_music_est.wav` and returns the set with
/// estimate paths filled in.
inline EvalSet run_oracle(const EvalSet& set, const OracleOptions& options,
                          const std::filesystem::path& out_dir, std::vector<TrackError>& errors,
                          unsigned jobs = 1) {
  if (!has_references(set)) {
    throw Error(ErrorKind::kUnsupportedEvaluation,
                "oracle masks need reference stems; '" + set.name + "' has none");
  }
  std::filesystem::create_directories(out_dir);
  EvalSet out = set;
  std::vector<std::optional<TrackError>> failures(set.tracks.size());
  parallel_for(set.tracks.size(), jobs, [&](std::size_t i) {
    EvalTrack& t = out.tracks[i];
    try {
      if (!t.speech_ref || !t.music_ref) throw Error(ErrorKind::kNotFound, "missing references");
      const StemPair refs(detail::load_mono_wav(*t.speech_ref), detail::load_mono_wav(*t.music_ref));
      const StemPair est = oracle_separate(detail::load_mono_wav(t.mixture), refs, options);
      t.speech_est = out_dir / (t.track_id + "_speech_est.wav");
      t.music_est = out_dir / (t.track_id + "_music_est.wav");
      write_wav(*t.speech_est, est.speech);
      write_wav(*t.music_est, est.music);
    } catch (const std::exception& e) {
      failures[i] = TrackError{t.track_id, "oracle", e.what()};
    }
  });
  for (auto& f : failures) {
    if (f) errors.push_back(std::move(*f));
  }
  return out;
}

}  // namespace podmix
