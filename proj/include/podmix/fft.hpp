#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace podmix {

/// Real-input FFT of a fixed size, half-spectrum layout (n/2 + 1 bins).
/// Holds plan state, so give each thread its own instance.
class RealFft {
 public:
  explicit RealFft(std::size_t size) : size_(size) {
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t bins() const noexcept { return size_ / 2 + 1; }

  /// `in` has size() samples, `out` bins() entries.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) {
    fft_.fwd(out.data(), in.data(), static_cast<Eigen::Index>(size_));
  }

  /// Scaled inverse (1/n): inverse(forward(x)) == x.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) {
    fft_.inv(out.data(), in.data(), static_cast<Eigen::Index>(size_));
  }

  std::vector<std::complex<double>> forward(std::span<const double> in) {
    std::vector<std::complex<double>> out(bins());
    forward(in, out);
    return out;
  }

 private:
  std::size_t size_;
  Eigen::FFT<double> fft_;
};

/// Smallest power of two >= n.
inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace podmix
