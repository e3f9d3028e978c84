#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "podmix/error.hpp"

namespace podmix {

inline constexpr int kDefaultSampleRate = 44100;

/// Multichannel PCM container. Samples are stored per channel, nominally in
/// [-1, 1]. All channels have the same length.
class AudioBuffer {
 public:
  AudioBuffer() : channels_(1), sample_rate_(kDefaultSampleRate) {}

  AudioBuffer(std::vector<std::vector<float>> channels, int sample_rate)
      : channels_(std::move(channels)), sample_rate_(sample_rate) {
    if (channels_.empty()) {
      throw Error(ErrorKind::kShape, "audio buffer needs at least one channel");
    }
    if (sample_rate_ <= 0) {
      throw Error(ErrorKind::kParameter, "sample rate must be positive");
    }
    for (const auto& ch : channels_) {
      if (ch.size() != channels_.front().size()) {
        throw Error(ErrorKind::kShape, "audio channels have unequal lengths");
      }
    }
  }

  static AudioBuffer mono(std::vector<float> samples,
                          int sample_rate = kDefaultSampleRate) {
    std::vector<std::vector<float>> channels;
    channels.push_back(std::move(samples));
    return AudioBuffer(std::move(channels), sample_rate);
  }

  static AudioBuffer zeros(std::size_t frames,
                           int sample_rate = kDefaultSampleRate) {
    return mono(std::vector<float>(frames, 0.0f), sample_rate);
  }

  std::size_t channel_count() const noexcept { return channels_.size(); }
  std::size_t frames() const noexcept { return channels_.front().size(); }
  bool empty() const noexcept { return frames() == 0; }
  int sample_rate() const noexcept { return sample_rate_; }

  std::span<const float> channel(std::size_t index) const {
    return channels_.at(index);
  }
  std::span<float> channel(std::size_t index) { return channels_.at(index); }

  /// First channel; the usual accessor for mono signals.
  std::span<const float> samples() const { return channels_.front(); }
  std::span<float> samples() { return channels_.front(); }

  const std::vector<std::vector<float>>& data() const noexcept {
    return channels_;
  }

  bool operator==(const AudioBuffer&) const = default;

 private:
  std::vector<std::vector<float>> channels_;
  int sample_rate_;
};

enum class WavEncoding { kPcm16, kFloat32 };

namespace detail {

inline std::uint16_t load_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void store_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<unsigned char>((v >> shift) & 0xff));
  }
}

inline std::string describe_encoding(std::uint16_t tag, std::uint16_t bits) {
  switch (tag) {
    case 1: return "PCM " + std::to_string(bits) + "-bit";
    case 3: return "IEEE float " + std::to_string(bits) + "-bit";
    case 6: return "A-law";
    case 7: return "mu-law";
    case 0xFFFE: return "WAVE_FORMAT_EXTENSIBLE";
    default: return "format tag " + std::to_string(tag);
  }
}

}  // namespace detail

/// Parses an in-memory RIFF/WAVE image. Accepts 16-bit PCM and 32-bit IEEE
/// float; unknown chunks are skipped.
inline AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  using detail::load_u16;
  using detail::load_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::kFormat, "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::span<const unsigned char> payload;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = load_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) {
      throw Error(ErrorKind::kFormat, "chunk extends past end of file");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorKind::kFormat, "fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      tag = load_u16(f);
      channels = load_u16(f + 2);
      rate = load_u32(f + 4);
      bits = load_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      payload = bytes.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw Error(ErrorKind::kFormat, "missing fmt chunk");
  if (!have_data) throw Error(ErrorKind::kFormat, "missing data chunk");
  if (channels == 0) throw Error(ErrorKind::kFormat, "zero channels");
  if (rate == 0) throw Error(ErrorKind::kFormat, "zero sample rate");

  const bool pcm16 = tag == 1 && bits == 16;
  const bool f32 = tag == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw Error(ErrorKind::kUnsupportedEncoding,
                "unsupported WAV encoding: " + detail::describe_encoding(tag, bits));
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = payload.size() / (width * channels);
  std::vector<std::vector<float>> out(channels, std::vector<float>(frames));
  const unsigned char* p = payload.data();
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(load_u16(p));
        out[c][i] = static_cast<float>(v) / 32768.0f;
      } else {
        out[c][i] = std::bit_cast<float>(load_u32(p));
      }
      p += width;
    }
  }
  return AudioBuffer(std::move(out), static_cast<int>(rate));
}

inline std::int16_t to_pcm16(float sample) {
  const double clamped = std::clamp(static_cast<double>(sample), -1.0, 1.0);
  // std::round is half-away-from-zero.
  const double scaled = std::round(clamped * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::vector<unsigned char> encode_wav(const AudioBuffer& buffer,
                                             WavEncoding encoding) {
  if (buffer.empty()) {
    throw Error(ErrorKind::kEmptyInput, "cannot write an empty audio buffer");
  }
  const std::uint16_t channels = static_cast<std::uint16_t>(buffer.channel_count());
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(buffer.frames() * block);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::store_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::store_u32(out, 16);
  detail::store_u16(out, encoding == WavEncoding::kPcm16 ? 1 : 3);
  detail::store_u16(out, channels);
  detail::store_u32(out, static_cast<std::uint32_t>(buffer.sample_rate()));
  detail::store_u32(out, static_cast<std::uint32_t>(buffer.sample_rate()) * block);
  detail::store_u16(out, block);
  detail::store_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::store_u32(out, data_size);
  for (std::size_t i = 0; i < buffer.frames(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float s = buffer.channel(c)[i];
      if (encoding == WavEncoding::kPcm16) {
        detail::store_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));
      } else {
        detail::store_u32(out, std::bit_cast<std::uint32_t>(s));
      }
    }
  }
  return out;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

inline void write_wav(const std::filesystem::path& path,
                      const AudioBuffer& buffer,
                      WavEncoding encoding = WavEncoding::kFloat32) {
  const auto bytes = encode_wav(buffer, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

/// Arithmetic mean across channels. Mono input is returned unchanged.
inline AudioBuffer downmix_to_mono(const AudioBuffer& buffer) {
  if (buffer.channel_count() == 1) return buffer;
  const std::size_t n = buffer.frames();
  const double scale = 1.0 / static_cast<double>(buffer.channel_count());
  std::vector<float> mono(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < buffer.channel_count(); ++c) {
      acc += buffer.channel(c)[i];
    }
    mono[i] = static_cast<float>(acc * scale);
  }
  return AudioBuffer::mono(std::move(mono), buffer.sample_rate());
}

/// RMS level of [start, start+length) over all channels, in dBFS. An all-zero
/// window yields -infinity.
inline double rms_dbfs(const AudioBuffer& buffer, std::size_t start,
                       std::size_t length) {
  if (length == 0 || start > buffer.frames() ||
      length > buffer.frames() - start) {
    throw Error(ErrorKind::kBounds, "rms window [" + std::to_string(start) + ", +" +
                                        std::to_string(length) +
                                        ") outside buffer of " +
                                        std::to_string(buffer.frames()) + " frames");
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < buffer.channel_count(); ++c) {
    const auto ch = buffer.channel(c);
    for (std::size_t i = start; i < start + length; ++i) {
      acc += static_cast<double>(ch[i]) * ch[i];
    }
  }
  if (acc == 0.0) return -std::numeric_limits<double>::infinity();
  const double mean = acc / static_cast<double>(length * buffer.channel_count());
  return 10.0 * std::log10(mean);
}

inline std::vector<double> to_double(std::span<const float> samples) {
  return {samples.begin(), samples.end()};
}

inline AudioBuffer from_double(std::span<const double> samples, int sample_rate) {
  std::vector<float> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(),
                 [](double v) { return static_cast<float>(v); });
  return AudioBuffer::mono(std::move(out), sample_rate);
}

}  // namespace podmix
