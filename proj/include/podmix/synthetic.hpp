#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "podmix/audio.hpp"
#include "podmix/manifest.hpp"
#include "podmix/random.hpp"

// Stand-in sources for demos and tests: voiced "utterances" (harmonic stacks
// under a syllabic envelope, separated by pauses) and "songs" (sustained
// chords over a noise floor). Nothing here models real speech or music; the
// signals only need distinct time-frequency structure.
namespace podmix::synthetic {

inline std::vector<float> utterance(SplitMix64& rng, double f0, double seconds, int rate) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<float> out(n, 0.0f);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.02, 0.1) * rate);
  while (pos < n) {
    const auto syllable = static_cast<std::size_t>(rng.uniform(0.12, 0.3) * rate);
    const double pitch = f0 * rng.uniform(0.85, 1.2);
    const double glide = rng.uniform(-0.3, 0.3);
    const double amp = rng.uniform(0.15, 0.35);
    double phase = 0.0;
    for (std::size_t i = 0; i < syllable && pos + i < n; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(syllable);
      const double env = std::sin(std::numbers::pi * u);
      const double f = pitch * (1.0 + glide * u);
      phase += kTwoPi * f / rate;
      double v = 0.0;
      for (int h = 1; h <= 12; ++h) {
        const double hf = f * h;
        // crude formant emphasis around 500 Hz and 1500 Hz
        const double w = 1.0 / h + 0.6 * std::exp(-std::pow((hf - 500.0) / 200.0, 2)) +
                         0.4 * std::exp(-std::pow((hf - 1500.0) / 300.0, 2));
        v += w * std::sin(h * phase);
      }
      out[pos + i] = static_cast<float>(amp * env * env * v * 0.3);
    }
    pos += syllable;
    // short gap between syllables, a longer pause now and then
    pos += static_cast<std::size_t>(
        (rng.bernoulli(0.2) ? rng.uniform(0.25, 0.5) : rng.uniform(0.02, 0.08)) * rate);
  }
  return out;
}

inline std::vector<float> song(SplitMix64& rng, double seconds, int rate) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<float> out(n, 0.0f);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double root = 55.0 * std::pow(2.0, static_cast<double>(rng.below(12)) / 12.0);
  const double chord_seconds = rng.uniform(0.8, 1.6);
  const auto chord_len = static_cast<std::size_t>(chord_seconds * rate);
  static constexpr int kShapes[][3] = {{0, 4, 7}, {0, 3, 7}, {5, 9, 12}, {7, 11, 14}, {-3, 0, 4}};
  for (std::size_t start = 0; start < n; start += chord_len) {
    const auto& shape = kShapes[rng.below(std::size(kShapes))];
    const int octave = static_cast<int>(rng.below(2)) + 1;
    for (int k = 0; k < 3; ++k) {
      const double f = root * octave * std::pow(2.0, shape[k] / 12.0);
      const double amp = rng.uniform(0.05, 0.1);
      for (std::size_t i = 0; i < chord_len && start + i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double env = std::exp(-t / (chord_seconds * 1.5));
        const double p = kTwoPi * f * t;
        out[start + i] += static_cast<float>(
            amp * env * (std::sin(p) + 0.5 * std::sin(2 * p) + 0.25 * std::sin(3 * p)));
      }
    }
  }
  for (auto& v : out) v += static_cast<float>(0.004 * (rng.uniform() - 0.5));
  return out;
}

struct CorpusOptions {
  std::size_t speakers = 30;
  std::size_t files_per_speaker = 3;
  double min_utterance_s = 1.5;
  double max_utterance_s = 3.0;
  std::size_t artists = 20;
  std::size_t songs_per_artist = 2;
  double song_s = 8.0;
  bool stereo_songs = false;
  int sample_rate = kDefaultSampleRate;
};

struct Corpus {
  SourceManifest speech;
  SourceManifest music;
};

/// Writes WAVs under `dir/speech` and `dir/music` plus unpartitioned
/// `speech.csv` / `music.csv` manifests. Output depends only on the options
/// and the seed.
inline Corpus write_corpus(const std::filesystem::path& dir, const CorpusOptions& options,
                           std::uint64_t seed) {
  std::filesystem::create_directories(dir / "speech");
  std::filesystem::create_directories(dir / "music");
  SplitMix64 rng(seed);
  const int rate = options.sample_rate;
  char name[64];

  std::vector<ManifestEntry> speech;
  for (std::size_t s = 0; s < options.speakers; ++s) {
    const double f0 = rng.uniform(95.0, 240.0);
    std::snprintf(name, sizeof name, "spk%03zu", s);
    const std::string speaker = name;
    for (std::size_t k = 0; k < options.files_per_speaker; ++k) {
      const double seconds = rng.uniform(options.min_utterance_s, options.max_utterance_s);
      auto samples = utterance(rng, f0, seconds, rate);
      const std::string id = speaker + "_" + std::to_string(k);
      const std::string rel = "speech/" + id + ".wav";
      const double duration = static_cast<double>(samples.size()) / rate;
      write_wav(dir / rel, AudioBuffer::mono(std::move(samples), rate));
      speech.push_back({id, rel, speaker, duration, std::nullopt});
    }
  }

  std::vector<ManifestEntry> music;
  for (std::size_t a = 0; a < options.artists; ++a) {
    std::snprintf(name, sizeof name, "artist%03zu", a);
    const std::string artist = name;
    for (std::size_t k = 0; k < options.songs_per_artist; ++k) {
      auto left = song(rng, options.song_s, rate);
      const std::string id = artist + "_" + std::to_string(k);
      const std::string rel = "music/" + id + ".wav";
      const double duration = static_cast<double>(left.size()) / rate;
      if (options.stereo_songs) {
        std::vector<float> right(left.size());
        for (std::size_t i = 0; i < left.size(); ++i) right[i] = 0.8f * left[i];
        write_wav(dir / rel, AudioBuffer({std::move(left), std::move(right)}, rate));
      } else {
        write_wav(dir / rel, AudioBuffer::mono(std::move(left), rate));
      }
      music.push_back({id, rel, artist, duration, std::nullopt});
    }
  }

  Corpus corpus{SourceManifest(SourceKind::kSpeech, std::move(speech), dir),
                SourceManifest(SourceKind::kMusic, std::move(music), dir)};
  std::ofstream speech_csv(dir / "speech.csv", std::ios::trunc);
  write_manifest_csv(speech_csv, corpus.speech);
  std::ofstream music_csv(dir / "music.csv", std::ios::trunc);
  write_manifest_csv(music_csv, corpus.music);
  return corpus;
}

}  // namespace podmix::synthetic
