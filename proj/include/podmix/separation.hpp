#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "podmix/audio.hpp"
#include "podmix/error.hpp"
#include "podmix/spectral.hpp"

namespace podmix {

/// Speech and music signals of equal length and rate.
struct StemPair {
  AudioBuffer speech;
  AudioBuffer music;

  StemPair(AudioBuffer s, AudioBuffer m) : speech(std::move(s)), music(std::move(m)) {
    if (speech.frames() != music.frames() || speech.sample_rate() != music.sample_rate()) {
      throw Error(ErrorKind::kShape, "stem pair lengths or rates differ");
    }
  }
};

struct MaskPair {
  Mask speech;
  Mask music;
};

inline constexpr double kMaskEpsilon = 1e-8;

namespace detail {

inline void require_same_shape(const RealMatrix& a, const RealMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::kShape, std::string(what) + ": shape mismatch");
  }
}

}  // namespace detail

/// M_s = |S| / (|S| + |M| + eps), M_m = |M| / (|S| + |M| + eps).
inline MaskPair ideal_ratio_masks(const RealMatrix& speech_mag, const RealMatrix& music_mag,
                                  double eps = kMaskEpsilon) {
  detail::require_same_shape(speech_mag, music_mag, "ideal_ratio_masks");
  if ((speech_mag.array() < 0).any() || (music_mag.array() < 0).any()) {
    throw Error(ErrorKind::kDomain, "magnitudes must be nonnegative");
  }
  const RealMatrix denom = (speech_mag + music_mag).array() + eps;
  return {{speech_mag.cwiseQuotient(denom)}, {music_mag.cwiseQuotient(denom)}};
}

/// M_s = 1 where |S| >= |M| (ties go to speech), M_m = 1 - M_s.
inline MaskPair ideal_binary_masks(const RealMatrix& speech_mag, const RealMatrix& music_mag) {
  detail::require_same_shape(speech_mag, music_mag, "ideal_binary_masks");
  RealMatrix s = (speech_mag.array() >= music_mag.array()).cast<double>();
  RealMatrix m = 1.0 - s.array();
  return {{std::move(s)}, {std::move(m)}};
}

struct CombineOptions {
  double eps = kMaskEpsilon;
  /// Use M'_m = 1 - M'_s instead of the default M'_m = 1 - M_s.
  bool complementary_music_mask = false;
};

/// M'_s = M_s / (M_s + M_m) with the denominator floored at eps.
/// M'_m = 1 - M_s (note: the raw speech mask), or 1 - M'_s when
/// complementary_music_mask is set.
inline MaskPair combine_masks(const Mask& speech, const Mask& music,
                              const CombineOptions& options = {}) {
  detail::require_same_shape(speech.values, music.values, "combine_masks");
  const RealMatrix denom =
      (speech.values + music.values).array().max(options.eps).matrix();
  RealMatrix s = speech.values.cwiseQuotient(denom);
  RealMatrix m = options.complementary_music_mask ? RealMatrix(1.0 - s.array())
                                                  : RealMatrix(1.0 - speech.values.array());
  return {{std::move(s)}, {std::move(m)}};
}

enum class MaskKind { kIrm, kIbm };

struct OracleOptions {
  MaskKind mask_kind = MaskKind::kIrm;
  bool combine = false;
  CombineOptions combine_options;
  StftParams stft;
};

/// Oracle separation: masks from reference magnitudes, applied to the
/// mixture STFT with the mixture phase, inverted to the original length.
inline StemPair oracle_separate(const AudioBuffer& mixture, const StemPair& references,
                                const OracleOptions& options = {}) {
  if (mixture.channel_count() != 1 || references.speech.channel_count() != 1 ||
      references.music.channel_count() != 1) {
    throw Error(ErrorKind::kShape, "oracle separation expects mono signals");
  }
  if (mixture.frames() != references.speech.frames()) {
    throw Error(ErrorKind::kAlignment, "mixture and references differ in length (" +
                                           std::to_string(mixture.frames()) + " vs " +
                                           std::to_string(references.speech.frames()) + ")");
  }
  const Spectrogram mix_spec = stft(mixture, options.stft);
  const RealMatrix speech_mag = stft(references.speech, options.stft).magnitude();
  const RealMatrix music_mag = stft(references.music, options.stft).magnitude();
  MaskPair masks = options.mask_kind == MaskKind::kIrm
                       ? ideal_ratio_masks(speech_mag, music_mag)
                       : ideal_binary_masks(speech_mag, music_mag);
  if (options.combine) masks = combine_masks(masks.speech, masks.music, options.combine_options);
  return {apply_mask_with_mixture_phase(mix_spec, masks.speech),
          apply_mask_with_mixture_phase(mix_spec, masks.music)};
}

inline constexpr double kStdFloor = 1e-8;

struct NormalizedSamples {
  std::vector<double> values;
  double mean = 0.0;
  double std = 1.0;
};

/// (x - mean) / std with population std floored at 1e-8.
inline NormalizedSamples adaptive_normalize(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorKind::kEmptyInput, "cannot normalize an empty signal");
  const auto n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  NormalizedSamples out;
  out.mean = mean;
  out.std = std::max(std::sqrt(var / n), kStdFloor);
  out.values.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = (x[i] - mean) / out.std;
  return out;
}

struct Normalized {
  AudioBuffer normalized;
  double mean = 0.0;
  double std = 1.0;
};

inline Normalized adaptive_normalize(const AudioBuffer& buffer) {
  const auto x = to_double(buffer.samples());
  NormalizedSamples n = adaptive_normalize(std::span<const double>(x));
  return {from_double(n.values, buffer.sample_rate()), n.mean, n.std};
}

inline std::vector<double> denormalize(std::span<const double> x, double mean, double std) {
  if (!(std > 0.0)) throw Error(ErrorKind::kDomain, "std must be positive");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std * x[i] + mean;
  return out;
}

inline AudioBuffer denormalize(const AudioBuffer& buffer, double mean, double std) {
  if (!(std > 0.0)) throw Error(ErrorKind::kDomain, "std must be positive");
  std::vector<float> out(buffer.frames());
  const auto x = buffer.samples();
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(std * x[i] + mean);
  }
  return AudioBuffer::mono(std::move(out), buffer.sample_rate());
}

/// Undoes input normalization on separated stems: both are rescaled by std;
/// the mean is added to neither since stems are zero-mean audio.
inline StemPair denormalize_stems(const StemPair& stems, double std) {
  return {denormalize(stems.speech, 0.0, std), denormalize(stems.music, 0.0, std)};
}

struct LogL2Options {
  double eps = kMaskEpsilon;
  bool squared_differences = false;
};

/// (10/T) log10(sum |s_hat - s| + eps) + (10/T) log10(sum |m_hat - m| + eps).
inline double log_l2_loss(const StemPair& estimates, const StemPair& references,
                          const LogL2Options& options = {}) {
  const std::size_t t = estimates.speech.frames();
  if (t == 0 || references.speech.frames() != t) {
    throw Error(ErrorKind::kShape, "log_l2_loss needs four equal, non-empty signals");
  }
  auto term = [&](std::span<const float> est, std::span<const float> ref) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double d = std::abs(static_cast<double>(est[i]) - ref[i]);
      acc += options.squared_differences ? d * d : d;
    }
    return 10.0 / static_cast<double>(t) * std::log10(acc + options.eps);
  };
  return term(estimates.speech.samples(), references.speech.samples()) +
         term(estimates.music.samples(), references.music.samples());
}

}  // namespace podmix
