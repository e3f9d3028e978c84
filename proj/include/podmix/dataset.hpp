#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "podmix/audio.hpp"
#include "podmix/error.hpp"
#include "podmix/manifest.hpp"
#include "podmix/mix.hpp"
#include "podmix/parallel.hpp"
#include "podmix/random.hpp"
#include "podmix/recipe.hpp"

namespace podmix {

struct MixConfig {
  std::map<Partition, std::size_t> counts{{Partition::kTest, 10}};
  double duration_s = 18.0;
  double silence_threshold_db = kDefaultSilenceThresholdDb;
  double overlap_probability = kOverlapProbability;
  int sample_rate = kDefaultSampleRate;

  std::size_t duration_samples() const {
    return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  }
};

/// Reads `{counts: {train, validation, test}, duration_s, silence_threshold_db,
/// overlap_probability, sample_rate}`; absent keys keep `base` values.
inline MixConfig parse_mix_config(const nlohmann::json& j, MixConfig base = {}) {
  try {
    if (j.contains("counts")) {
      base.counts.clear();
      for (const auto& [name, value] : j.at("counts").items()) {
        base.counts[parse_partition(name)] = value.get<std::size_t>();
      }
    }
    base.duration_s = j.value("duration_s", base.duration_s);
    base.silence_threshold_db = j.value("silence_threshold_db", base.silence_threshold_db);
    base.overlap_probability = j.value("overlap_probability", base.overlap_probability);
    base.sample_rate = j.value("sample_rate", base.sample_rate);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad mix config: ") + e.what());
  }
  if (!(base.duration_s > 0.0) || base.duration_samples() == 0) {
    throw Error(ErrorKind::kConfig, "duration_s must be positive");
  }
  return base;
}

inline std::string make_record_id(Partition partition, std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index));
  return std::string(to_string(partition)) + "-" + buf;
}

/// Re-renders a recipe from its sources. generate_dataset goes through this
/// same path, so a stored recipe reproduces its WAVs bit for bit.
inline MixResult render_recipe(const MixRecipe& recipe, const SourceManifest& speech,
                               const SourceManifest& music, const SourceLoader& loader) {
  const AudioBuffer speech_track =
      render_speech_track(speech, recipe.speech_segments, recipe.overlap_segment,
                          recipe.duration, recipe.sample_rate, loader);
  const AudioBuffer music_track =
      render_music_fragment(music, recipe.music_fragment, recipe.sample_rate, loader);
  return mix(speech_track, music_track, recipe.g_m);
}

struct GeneratedRecord {
  MixRecipe recipe;
  MixResult audio;
};

/// Draws and renders record `index` of `partition` from its own stream,
/// SplitMix64(derive_stream_seed(master_seed, index)). Draw order: g_m,
/// overlap flag, speaker, utterances (+ overlap speaker, utterance, position),
/// music entry/offset attempts.
inline GeneratedRecord generate_record(std::uint64_t index, Partition partition,
                                       std::uint64_t master_seed,
                                       const SourceManifest& speech,
                                       const SourceManifest& music, const MixConfig& config,
                                       const SourceLoader& loader) {
  SplitMix64 rng(derive_stream_seed(master_seed, index));
  const MixParams params = draw_mix_params(rng, config.overlap_probability);
  const auto speakers = speech.groups_in(partition);
  if (speakers.empty()) {
    throw Error(ErrorKind::kNoSource, "no speakers in partition " +
                                          std::string(to_string(partition)));
  }
  const std::string& speaker = speakers[rng.below(speakers.size())];
  const std::size_t duration = config.duration_samples();
  SpeechTrack track = build_speech_track(speech, speaker, duration, params.overlap, rng,
                                         loader, config.sample_rate);
  MusicSample music_sample =
      sample_music_fragment(music, duration, rng, loader, config.silence_threshold_db,
                            partition, config.sample_rate);

  MixRecipe recipe;
  recipe.record_id = make_record_id(partition, index);
  recipe.record_index = index;
  recipe.partition = partition;
  recipe.master_seed = master_seed;
  recipe.sample_rate = config.sample_rate;
  recipe.speaker_group_id = speaker;
  recipe.speech_segments = std::move(track.segments);
  recipe.overlap_segment = std::move(track.overlap_segment);
  recipe.music_fragment = std::move(music_sample.fragment);
  recipe.g_m = params.g_m;
  recipe.duration = duration;

  MixResult audio = mix(track.audio, music_sample.audio, params.g_m);
  recipe.g_r = audio.g_r;
  return {std::move(recipe), std::move(audio)};
}

struct RecordError {
  std::string record_id;
  std::string message;
};

struct DatasetRun {
  std::vector<MixRecipe> recipes;  // successful records, in index order
  std::vector<RecordError> errors;
};

using RecordSink = std::function<void(const GeneratedRecord&)>;

/// Generates every configured record. Records are numbered globally (train,
/// then validation, then test) and each owns an independent stream, so the
/// output does not depend on `jobs`. `sink` runs on worker threads.
inline DatasetRun generate_dataset(const SourceManifest& speech, const SourceManifest& music,
                                   const MixConfig& config, std::uint64_t master_seed,
                                   const SourceLoader& loader, unsigned jobs = 1,
                                   const RecordSink& sink = {}) {
  if (!speech.fully_partitioned() || !music.fully_partitioned()) {
    throw Error(ErrorKind::kParameter, "manifests must be partitioned before mixing");
  }
  std::vector<std::pair<std::uint64_t, Partition>> plan;
  for (Partition p : kAllPartitions) {
    auto it = config.counts.find(p);
    const std::size_t n = it == config.counts.end() ? 0 : it->second;
    for (std::size_t k = 0; k < n; ++k) plan.emplace_back(plan.size(), p);
  }
  std::vector<std::optional<MixRecipe>> recipes(plan.size());
  std::vector<std::optional<RecordError>> errors(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    const auto [index, partition] = plan[i];
    try {
      GeneratedRecord rec =
          generate_record(index, partition, master_seed, speech, music, config, loader);
      if (sink) sink(rec);
      recipes[i] = std::move(rec.recipe);
    } catch (const std::exception& e) {
      const std::string id = make_record_id(partition, index);
      errors[i] = RecordError{id, id + ": " + e.what()};
    }
  });
  DatasetRun run;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (recipes[i]) run.recipes.push_back(std::move(*recipes[i]));
    if (errors[i]) run.errors.push_back(std::move(*errors[i]));
  }
  return run;
}

inline void write_record_files(const std::filesystem::path& dir, const GeneratedRecord& rec) {
  const std::string& id = rec.recipe.record_id;
  write_wav(dir / (id + "_mix.wav"), rec.audio.mixture);
  write_wav(dir / (id + "_speech.wav"), rec.audio.speech_stem);
  write_wav(dir / (id + "_music.wav"), rec.audio.music_stem);
  write_recipe(dir / (id + ".json"), rec.recipe);
}

/// Writes `{record_id}_mix.wav`, `_speech.wav`, `_music.wav` (float32) and
/// `{record_id}.json` per record, plus an evaluation-set manifest for the
/// test partition.
inline DatasetRun write_dataset(const std::filesystem::path& out_dir,
                                const SourceManifest& speech, const SourceManifest& music,
                                const MixConfig& config, std::uint64_t master_seed,
                                const SourceLoader& loader, unsigned jobs = 1) {
  std::filesystem::create_directories(out_dir);
  DatasetRun run = generate_dataset(speech, music, config, master_seed, loader, jobs,
                                    [&](const GeneratedRecord& rec) {
                                      write_record_files(out_dir, rec);
                                    });
  nlohmann::ordered_json tracks = nlohmann::ordered_json::array();
  for (const auto& r : run.recipes) {
    if (r.partition != Partition::kTest) continue;
    tracks.push_back({{"track_id", r.record_id},
                      {"mixture", r.record_id + "_mix.wav"},
                      {"speech_ref", r.record_id + "_speech.wav"},
                      {"music_ref", r.record_id + "_music.wav"}});
  }
  if (!tracks.empty()) {
    nlohmann::ordered_json set{{"name", "synth-test"}, {"tracks", std::move(tracks)}};
    std::ofstream out(out_dir / "evalset_synth-test.json", std::ios::trunc);
    out << set.dump(2) << '\n';
  }
  return run;
}

}  // namespace podmix
