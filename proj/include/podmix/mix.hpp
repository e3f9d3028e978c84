#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "podmix/audio.hpp"
#include "podmix/error.hpp"
#include "podmix/manifest.hpp"
#include "podmix/random.hpp"

namespace podmix {

// ---------------------------------------------------------------------------
// Provenance records

struct SpeechSegment {
  std::string entry_id;
  std::size_t source_offset = 0;
  std::size_t length = 0;
  std::size_t dest_position = 0;

  bool operator==(const SpeechSegment&) const = default;
};

struct OverlapSegment {
  std::string entry_id;
  std::size_t source_offset = 0;
  std::size_t length = 0;
  std::size_t dest_position = 0;
  std::string group_id;

  bool operator==(const OverlapSegment&) const = default;
};

struct MusicFragment {
  std::string entry_id;
  std::size_t source_offset = 0;
  std::size_t length = 0;

  bool operator==(const MusicFragment&) const = default;
};

// ---------------------------------------------------------------------------
// Source loading

using AudioHandle = std::shared_ptr<const AudioBuffer>;
using SourceLoader =
    std::function<AudioHandle(const SourceManifest&, const ManifestEntry&)>;

/// Reads source WAVs through the manifest root, keeping each decoded file in
/// memory. Safe to share between generator threads.
class CachingWavLoader {
 public:
  AudioHandle operator()(const SourceManifest& manifest,
                         const ManifestEntry& entry) {
    const auto path = manifest.resolve(entry);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(path.string()); it != cache_.end()) return it->second;
    }
    auto loaded = std::make_shared<const AudioBuffer>(read_wav(path));
    std::lock_guard lock(mutex_);
    return cache_.emplace(path.string(), std::move(loaded)).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, AudioHandle> cache_;
};

inline SourceLoader make_wav_loader() {
  auto loader = std::make_shared<CachingWavLoader>();
  return [loader](const SourceManifest& m, const ManifestEntry& e) {
    return (*loader)(m, e);
  };
}

// ---------------------------------------------------------------------------
// Loudness and gains

/// sqrt(sum of squares) over every sample. A sum, not a mean.
inline double loudness(std::span<const float> samples) {
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc);
}

inline double loudness(const AudioBuffer& buffer) {
  double acc = 0.0;
  for (std::size_t c = 0; c < buffer.channel_count(); ++c) {
    const double l = loudness(buffer.channel(c));
    acc += l * l;
  }
  return std::sqrt(acc);
}

/// Loudness ratio speech / music: the factor that brings music to speech level.
inline double gain_ratio(const AudioBuffer& speech, const AudioBuffer& music) {
  const double music_level = loudness(music);
  if (music_level == 0.0) {
    throw Error(ErrorKind::kSilentSource, "gain ratio undefined for silent music");
  }
  return loudness(speech) / music_level;
}

inline constexpr double kMusicGainMin = 0.01;
inline constexpr double kMusicGainMax = 1.0;
inline constexpr double kOverlapProbability = 0.1;

struct MixParams {
  double g_m = 0.0;
  bool overlap = false;
};

/// Draws g_m ~ U(0.01, 1) then an independent overlap flag with p = 0.1, in
/// that order from the stream.
inline MixParams draw_mix_params(SplitMix64& rng,
                                 double overlap_probability = kOverlapProbability) {
  MixParams p;
  p.g_m = rng.uniform(kMusicGainMin, kMusicGainMax);
  p.overlap = rng.bernoulli(overlap_probability);
  return p;
}

// ---------------------------------------------------------------------------
// Speech track

struct SpeechTrack {
  AudioBuffer audio;
  std::vector<SpeechSegment> segments;
  std::optional<OverlapSegment> overlap_segment;
};

namespace detail {

inline AudioHandle load_mono(const SourceLoader& loader,
                             const SourceManifest& manifest,
                             const ManifestEntry& entry, int sample_rate) {
  AudioHandle audio = loader(manifest, entry);
  if (audio->sample_rate() != sample_rate) {
    throw Error(ErrorKind::kShape, "source '" + entry.id + "' is at " +
                                       std::to_string(audio->sample_rate()) +
                                       " Hz, expected " + std::to_string(sample_rate));
  }
  if (audio->channel_count() != 1) {
    audio = std::make_shared<const AudioBuffer>(downmix_to_mono(*audio));
  }
  return audio;
}

inline void check_fits(const std::string& entry_id, std::size_t offset,
                       std::size_t length, std::size_t available) {
  if (offset > available || length > available - offset) {
    throw Error(ErrorKind::kBounds, "segment of '" + entry_id +
                                        "' exceeds its source file");
  }
}

}  // namespace detail

/// Renders a speech buffer from segment provenance: segments are copied, the
/// optional overlap excerpt is summed on top.
inline AudioBuffer render_speech_track(const SourceManifest& manifest,
                                       const std::vector<SpeechSegment>& segments,
                                       const std::optional<OverlapSegment>& overlap,
                                       std::size_t duration, int sample_rate,
                                       const SourceLoader& loader) {
  std::vector<float> out(duration, 0.0f);
  for (const auto& seg : segments) {
    const auto audio = detail::load_mono(loader, manifest, manifest.find(seg.entry_id),
                                         sample_rate);
    detail::check_fits(seg.entry_id, seg.source_offset, seg.length, audio->frames());
    if (seg.dest_position > duration || seg.length > duration - seg.dest_position) {
      throw Error(ErrorKind::kBounds, "segment of '" + seg.entry_id +
                                          "' exceeds mixture duration");
    }
    const auto src = audio->samples().subspan(seg.source_offset, seg.length);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(seg.dest_position));
  }
  if (overlap) {
    const auto audio = detail::load_mono(loader, manifest, manifest.find(overlap->entry_id),
                                         sample_rate);
    detail::check_fits(overlap->entry_id, overlap->source_offset, overlap->length,
                       audio->frames());
    if (overlap->dest_position > duration ||
        overlap->length > duration - overlap->dest_position) {
      throw Error(ErrorKind::kBounds, "overlap segment exceeds mixture duration");
    }
    const auto src = audio->samples().subspan(overlap->source_offset, overlap->length);
    for (std::size_t k = 0; k < src.size(); ++k) {
      out[overlap->dest_position + k] += src[k];
    }
  }
  return AudioBuffer::mono(std::move(out), sample_rate);
}

/// Fills `duration` samples left to right with whole utterances of `speaker`
/// drawn uniformly with replacement; the last one is truncated. With
/// `overlap`, one utterance of a different speaker from the same partition is
/// summed at a uniform position and truncated at the buffer end.
inline SpeechTrack build_speech_track(const SourceManifest& manifest,
                                      const std::string& speaker,
                                      std::size_t duration, bool overlap,
                                      SplitMix64& rng, const SourceLoader& loader,
                                      int sample_rate = kDefaultSampleRate) {
  const auto own = manifest.entries_of(speaker);
  if (own.empty()) {
    throw Error(ErrorKind::kNoSource, "speaker '" + speaker + "' has no recordings");
  }
  SpeechTrack track;
  std::size_t filled = 0;
  while (filled < duration) {
    const ManifestEntry& entry = *own[rng.below(own.size())];
    const auto audio = detail::load_mono(loader, manifest, entry, sample_rate);
    if (audio->empty()) {
      throw Error(ErrorKind::kNoSource, "speech file '" + entry.id + "' is empty");
    }
    const std::size_t take = std::min(audio->frames(), duration - filled);
    track.segments.push_back({entry.id, 0, take, filled});
    filled += take;
  }

  if (overlap) {
    const auto partition = own.front()->partition;
    std::set<std::string> candidates;
    for (const auto& e : manifest.entries()) {
      if (e.partition == partition && e.group_id != speaker) candidates.insert(e.group_id);
    }
    const std::vector<std::string> others(candidates.begin(), candidates.end());
    if (others.empty()) {
      throw Error(ErrorKind::kOverlapUnavailable,
                  "overlap needs a second speaker in the partition of '" + speaker + "'");
    }
    const std::string& other = others[rng.below(others.size())];
    const auto other_entries = manifest.entries_of(other);
    const ManifestEntry& entry = *other_entries[rng.below(other_entries.size())];
    const auto audio = detail::load_mono(loader, manifest, entry, sample_rate);
    const std::size_t position = duration == 0 ? 0 : rng.below(duration);
    const std::size_t take = std::min(audio->frames(), duration - position);
    track.overlap_segment = OverlapSegment{entry.id, 0, take, position, other};
  }

  track.audio = render_speech_track(manifest, track.segments, track.overlap_segment,
                                    duration, sample_rate, loader);
  return track;
}

// ---------------------------------------------------------------------------
// Music fragment

inline constexpr double kDefaultSilenceThresholdDb = -40.0;
inline constexpr int kFragmentAttempts = 100;

struct MusicSample {
  AudioBuffer audio;
  MusicFragment fragment;
};

inline AudioBuffer render_music_fragment(const SourceManifest& manifest,
                                         const MusicFragment& fragment,
                                         int sample_rate, const SourceLoader& loader) {
  const ManifestEntry& entry = manifest.find(fragment.entry_id);
  const AudioHandle audio = loader(manifest, entry);
  if (audio->sample_rate() != sample_rate) {
    throw Error(ErrorKind::kShape, "music '" + entry.id + "' is at " +
                                       std::to_string(audio->sample_rate()) +
                                       " Hz, expected " + std::to_string(sample_rate));
  }
  detail::check_fits(entry.id, fragment.source_offset, fragment.length, audio->frames());
  std::vector<std::vector<float>> channels;
  for (std::size_t c = 0; c < audio->channel_count(); ++c) {
    const auto src = audio->channel(c).subspan(fragment.source_offset, fragment.length);
    channels.emplace_back(src.begin(), src.end());
  }
  return downmix_to_mono(AudioBuffer(std::move(channels), sample_rate));
}

/// Picks a uniform entry (restricted to `partition` when given) and a uniform
/// offset; keeps the fragment if its mono RMS reaches `silence_threshold_db`.
/// Up to 100 offsets per entry and 100 entries are tried.
inline MusicSample sample_music_fragment(const SourceManifest& manifest,
                                         std::size_t duration, SplitMix64& rng,
                                         const SourceLoader& loader,
                                         double silence_threshold_db = kDefaultSilenceThresholdDb,
                                         std::optional<Partition> partition = {},
                                         int sample_rate = kDefaultSampleRate) {
  if (duration == 0) throw Error(ErrorKind::kParameter, "fragment duration must be positive");
  std::vector<const ManifestEntry*> eligible;
  for (const auto& e : manifest.entries()) {
    if (partition && e.partition != partition) continue;
    const auto frames = static_cast<std::size_t>(std::floor(e.duration_s * sample_rate + 1e-6));
    if (frames >= duration) eligible.push_back(&e);
  }
  if (eligible.empty()) {
    throw Error(ErrorKind::kNoFragment, "no music entry is at least " +
                                            std::to_string(duration) + " samples long");
  }
  for (int tries = 0; tries < kFragmentAttempts; ++tries) {
    const ManifestEntry& entry = *eligible[rng.below(eligible.size())];
    const AudioHandle audio = loader(manifest, entry);
    if (audio->frames() < duration) continue;  // manifest duration overstated
    for (int attempt = 0; attempt < kFragmentAttempts; ++attempt) {
      const std::size_t offset = rng.below(audio->frames() - duration + 1);
      MusicFragment frag{entry.id, offset, duration};
      AudioBuffer mono = render_music_fragment(manifest, frag, sample_rate, loader);
      if (rms_dbfs(mono, 0, duration) >= silence_threshold_db) {
        return {std::move(mono), std::move(frag)};
      }
    }
  }
  throw Error(ErrorKind::kAllSilent, "no non-silent music fragment found after " +
                                         std::to_string(kFragmentAttempts) + "x" +
                                         std::to_string(kFragmentAttempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Mixing model

struct MixResult {
  AudioBuffer mixture;
  AudioBuffer speech_stem;
  AudioBuffer music_stem;
  double g_r = 0.0;
};

/// x = x_s + g_r g_m x_m with g_r = loudness(x_s) / loudness(x_m). The stems
/// are returned already scaled, and mixture == speech_stem + music_stem per
/// sample. No clipping.
inline MixResult mix(const AudioBuffer& speech, const AudioBuffer& music, double g_m) {
  if (speech.channel_count() != 1 || music.channel_count() != 1) {
    throw Error(ErrorKind::kShape, "mix expects mono speech and music");
  }
  if (speech.frames() != music.frames()) {
    throw Error(ErrorKind::kShape, "speech and music lengths differ (" +
                                       std::to_string(speech.frames()) + " vs " +
                                       std::to_string(music.frames()) + ")");
  }
  if (speech.sample_rate() != music.sample_rate()) {
    throw Error(ErrorKind::kShape, "speech and music sample rates differ");
  }
  if (!(g_m > kMusicGainMin && g_m < kMusicGainMax)) {
    throw Error(ErrorKind::kDomain, "g_m must lie in (0.01, 1)");
  }
  const double g_r = gain_ratio(speech, music);
  const double scale = g_r * g_m;
  const std::size_t n = speech.frames();
  std::vector<float> music_stem(n), mixture(n);
  const auto s = speech.samples();
  const auto m = music.samples();
  for (std::size_t i = 0; i < n; ++i) {
    music_stem[i] = static_cast<float>(scale * static_cast<double>(m[i]));
    mixture[i] = s[i] + music_stem[i];
  }
  const int rate = speech.sample_rate();
  return {AudioBuffer::mono(std::move(mixture), rate), speech,
          AudioBuffer::mono(std::move(music_stem), rate), g_r};
}

// ---------------------------------------------------------------------------
// Group-disjoint partitioning

struct PartitionFractions {
  double train = 0.0;
  double validation = 0.0;
  double test = 0.0;

  double operator[](Partition p) const {
    switch (p) {
      case Partition::kTrain: return train;
      case Partition::kValidation: return validation;
      case Partition::kTest: return test;
    }
    return 0.0;
  }
};

inline constexpr PartitionFractions kSpeechFractions{0.7974, 0.1014, 0.1012};
inline constexpr PartitionFractions kMusicFractions{0.7998, 0.1032, 0.0970};

/// Assigns whole groups to partitions. Groups are shuffled, then each goes to
/// the partition whose recording count is furthest below its target; ties go
/// to the earlier partition (train, validation, test).
inline SourceManifest partition_manifest(const SourceManifest& manifest,
                                         const PartitionFractions& fractions,
                                         SplitMix64& rng) {
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-6 || fractions.train < 0 || fractions.validation < 0 ||
      fractions.test < 0) {
    throw Error(ErrorKind::kParameter, "partition fractions must be >= 0 and sum to 1");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& e : manifest.entries()) ++counts[e.group_id];
  if (counts.size() < 3) {
    throw Error(ErrorKind::kCannotPartition,
                "need at least 3 groups to partition, got " + std::to_string(counts.size()));
  }
  std::vector<std::string> groups;
  for (const auto& [g, _] : counts) groups.push_back(g);
  rng.shuffle(groups);

  const double total = static_cast<double>(manifest.entries().size());
  std::array<double, 3> assigned{};
  std::map<std::string, Partition> assignment;
  for (const auto& g : groups) {
    std::size_t best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 3; ++k) {
      const double deficit = fractions[kAllPartitions[k]] * total - assigned[k];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = k;
      }
    }
    assigned[best] += static_cast<double>(counts[g]);
    assignment[g] = kAllPartitions[best];
  }

  std::vector<ManifestEntry> entries = manifest.entries();
  for (auto& e : entries) e.partition = assignment.at(e.group_id);
  return SourceManifest(manifest.kind(), std::move(entries), manifest.root());
}

}  // namespace podmix
