#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "podmix/audio.hpp"
#include "podmix/error.hpp"
#include "podmix/fft.hpp"

namespace podmix {

using ComplexMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kWindowSize = 2048;
inline constexpr std::size_t kHopSize = 441;

struct StftParams {
  std::size_t window_size = kWindowSize;
  std::size_t hop = kHopSize;
};

/// One-sided complex STFT, frames x (window_size/2 + 1).
struct Spectrogram {
  ComplexMatrix bins;
  std::size_t window_size = kWindowSize;
  std::size_t hop = kHopSize;
  std::string window_kind = "hann";
  std::size_t original_length = 0;
  int sample_rate = kDefaultSampleRate;

  Eigen::Index frames() const { return bins.rows(); }
  Eigen::Index bin_count() const { return bins.cols(); }
  RealMatrix magnitude() const { return bins.cwiseAbs(); }
};

/// Time-frequency gain matrix shaped like a spectrogram's magnitude.
struct Mask {
  RealMatrix values;

  static Mask constant(Eigen::Index frames, Eigen::Index bins, double value) {
    return {RealMatrix::Constant(frames, bins, value)};
  }
};

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

inline std::size_t stft_frame_count(std::size_t length, std::size_t hop) {
  return length / hop + 1;
}

namespace detail {

inline void check_stft_params(const StftParams& p) {
  if (p.window_size < 2) throw Error(ErrorKind::kParameter, "window size must be >= 2");
  if (p.hop == 0 || p.hop > p.window_size) {
    throw Error(ErrorKind::kParameter,
                "hop must be in [1, window size] for overlap-add normalization");
  }
}

// Mirror index for reflection padding (edge sample not repeated). Handles
// pads longer than the signal by bouncing.
inline std::size_t reflect_index(std::ptrdiff_t j, std::size_t length) {
  if (length == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (length - 1));
  j = std::abs(j) % period;
  if (j >= static_cast<std::ptrdiff_t>(length)) j = period - j;
  return static_cast<std::size_t>(j);
}

}  // namespace detail

/// Centered STFT: the signal is reflection-padded by window_size/2 on both
/// sides, Hann-windowed, and transformed frame by frame. Frame f is centered
/// on sample f*hop.
inline Spectrogram stft(std::span<const double> signal, const StftParams& params = {},
                        int sample_rate = kDefaultSampleRate) {
  detail::check_stft_params(params);
  if (signal.empty()) throw Error(ErrorKind::kEmptyInput, "stft of an empty signal");
  const std::size_t n = params.window_size;
  const std::size_t half = n / 2;
  const std::size_t frames = stft_frame_count(signal.size(), params.hop);
  const auto window = hann_window(n);

  Spectrogram spec;
  spec.window_size = n;
  spec.hop = params.hop;
  spec.original_length = signal.size();
  spec.sample_rate = sample_rate;
  RealFft fft(n);
  spec.bins.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(fft.bins()));

  std::vector<double> frame(n);
  std::vector<std::complex<double>> out(fft.bins());
  for (std::size_t f = 0; f < frames; ++f) {
    const auto start = static_cast<std::ptrdiff_t>(f * params.hop) - static_cast<std::ptrdiff_t>(half);
    for (std::size_t k = 0; k < n; ++k) {
      const std::ptrdiff_t j = start + static_cast<std::ptrdiff_t>(k);
      const bool inside = j >= 0 && j < static_cast<std::ptrdiff_t>(signal.size());
      const double x = inside ? signal[static_cast<std::size_t>(j)]
                              : signal[detail::reflect_index(j, signal.size())];
      frame[k] = x * window[k];
    }
    fft.forward(frame, out);
    for (std::size_t b = 0; b < out.size(); ++b) {
      spec.bins(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = out[b];
    }
  }
  return spec;
}

inline Spectrogram stft(const AudioBuffer& buffer, const StftParams& params = {}) {
  if (buffer.channel_count() != 1) throw Error(ErrorKind::kShape, "stft expects mono audio");
  const auto x = to_double(buffer.samples());
  return stft(x, params, buffer.sample_rate());
}

inline constexpr double kOlaEpsilon = 1e-12;

/// Weighted overlap-add inverse with Hann synthesis window, normalized by the
/// summed squared window, truncated to original_length.
inline std::vector<double> istft_samples(const Spectrogram& spec) {
  detail::check_stft_params({spec.window_size, spec.hop});
  const std::size_t n = spec.window_size;
  const std::size_t half = n / 2;
  const auto frames = static_cast<std::size_t>(spec.frames());
  RealFft fft(n);
  if (static_cast<std::size_t>(spec.bin_count()) != fft.bins()) {
    throw Error(ErrorKind::kParameter, "spectrogram bin count does not match window size");
  }
  if (frames == 0) return std::vector<double>(spec.original_length, 0.0);
  const auto window = hann_window(n);
  const std::size_t padded = (frames - 1) * spec.hop + n;
  std::vector<double> acc(padded, 0.0), norm(padded, 0.0);
  std::vector<std::complex<double>> in(fft.bins());
  std::vector<double> frame(n);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t b = 0; b < in.size(); ++b) {
      in[b] = spec.bins(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b));
    }
    fft.inverse(in, frame);
    const std::size_t start = f * spec.hop;
    for (std::size_t k = 0; k < n; ++k) {
      acc[start + k] += frame[k] * window[k];
      norm[start + k] += window[k] * window[k];
    }
  }
  std::vector<double> out(spec.original_length, 0.0);
  for (std::size_t t = 0; t < out.size() && half + t < padded; ++t) {
    out[t] = acc[half + t] / (norm[half + t] + kOlaEpsilon);
  }
  return out;
}

inline AudioBuffer istft(const Spectrogram& spec) {
  return from_double(istft_samples(spec), spec.sample_rate);
}

inline Spectrogram apply_mask(const Spectrogram& spec, const Mask& mask) {
  if (mask.values.rows() != spec.frames() || mask.values.cols() != spec.bin_count()) {
    throw Error(ErrorKind::kShape, "mask shape does not match spectrogram");
  }
  Spectrogram out = spec;
  out.bins = spec.bins.cwiseProduct(mask.values.cast<std::complex<double>>());
  return out;
}

/// Scales the mixture magnitude by the mask and keeps the mixture phase,
/// then inverts. Equivalent to a real gain on each complex bin.
inline std::vector<double> apply_mask_with_mixture_phase_samples(
    const Spectrogram& mixture_spec, const Mask& mask) {
  return istft_samples(apply_mask(mixture_spec, mask));
}

inline AudioBuffer apply_mask_with_mixture_phase(const Spectrogram& mixture_spec,
                                                 const Mask& mask) {
  return from_double(apply_mask_with_mixture_phase_samples(mixture_spec, mask),
                     mixture_spec.sample_rate);
}

// Binary dump: four little-endian uint32 (frames, bins, N, hop), then
// interleaved little-endian float32 (re, im), row-major by frame.

inline void write_spectrogram_dump(const std::filesystem::path& path, const Spectrogram& spec) {
  std::vector<unsigned char> bytes;
  for (std::uint32_t v : {static_cast<std::uint32_t>(spec.frames()),
                          static_cast<std::uint32_t>(spec.bin_count()),
                          static_cast<std::uint32_t>(spec.window_size),
                          static_cast<std::uint32_t>(spec.hop)}) {
    detail::store_u32(bytes, v);
  }
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    for (Eigen::Index b = 0; b < spec.bin_count(); ++b) {
      const auto c = spec.bins(f, b);
      detail::store_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(c.real())));
      detail::store_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(c.imag())));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline Spectrogram read_spectrogram_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw Error(ErrorKind::kFormat, "spectrogram dump too short");
  const std::uint32_t frames = detail::load_u32(bytes.data());
  const std::uint32_t bins = detail::load_u32(bytes.data() + 4);
  Spectrogram spec;
  spec.window_size = detail::load_u32(bytes.data() + 8);
  spec.hop = detail::load_u32(bytes.data() + 12);
  if (bytes.size() != 16 + std::size_t{frames} * bins * 8) {
    throw Error(ErrorKind::kFormat, "spectrogram dump size does not match header");
  }
  spec.bins.resize(frames, bins);
  const unsigned char* p = bytes.data() + 16;
  for (std::uint32_t f = 0; f < frames; ++f) {
    for (std::uint32_t b = 0; b < bins; ++b, p += 8) {
      spec.bins(f, b) = {std::bit_cast<float>(detail::load_u32(p)),
                         std::bit_cast<float>(detail::load_u32(p + 4))};
    }
  }
  spec.original_length = frames == 0 ? 0 : std::size_t{frames - 1} * spec.hop;
  return spec;
}

}  // namespace podmix
