#pragma once

#include <charconv>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "json.hpp"
#include "podmix/audio.hpp"
#include "podmix/error.hpp"
#include "podmix/fft.hpp"
#include "podmix/manifest.hpp"
#include "podmix/separation.hpp"

namespace podmix {

inline constexpr std::size_t kDefaultFilterLength = 512;

/// Tikhonov damping, relative to the mean diagonal of each Gram matrix. The
/// smallest value whose Cholesky factorization succeeds is used, escalating by
/// 10x up to the maximum.
inline constexpr double kGramDampingMin = 1e-14;
inline constexpr double kGramDamping = 1e-10;

/// Error energies at or below this fraction of the estimate energy are below
/// the resolution of the projection and are reported as exact (infinite
/// ratio). Corresponds to 160 dB.
inline constexpr double kResolutionFloor = 1e-16;

inline constexpr int kRefinementSteps = 2;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// estimate = s_target + e_interf + e_artif. Each component has
/// T + L - 1 samples: delayed copies of the references run past the end of
/// the estimate, which is zero-padded to match.
struct Decomposition {
  std::vector<double> s_target;
  std::vector<double> e_interf;
  std::vector<double> e_artif;
  std::size_t filter_length = 0;
};

inline double energy(std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// Projection onto the span of 0..L-1 sample delays of a fixed set of
/// references. Factorizes the Gram matrices once; each decompose() call then
/// costs a few FFTs and two triangular solves.
class DelayProjector {
 public:
  DelayProjector(std::vector<std::vector<double>> references, std::size_t filter_length)
      : refs_(std::move(references)), taps_(filter_length) {
    if (refs_.empty()) throw Error(ErrorKind::kShape, "no references to project onto");
    length_ = refs_.front().size();
    for (const auto& r : refs_) {
      if (r.size() != length_) throw Error(ErrorKind::kShape, "references differ in length");
    }
    if (taps_ < 1 || taps_ > length_) {
      throw Error(ErrorKind::kParameter, "filter length must satisfy 1 <= L <= T (L = " +
                                             std::to_string(taps_) + ", T = " +
                                             std::to_string(length_) + ")");
    }
    for (std::size_t a = 0; a < refs_.size(); ++a) {
      if (energy(refs_[a]) == 0.0) {
        throw Error(ErrorKind::kSingularProjection,
                    "reference " + std::to_string(a) + " is silent");
      }
    }
    nfft_ = std::max<std::size_t>(4, next_pow2(length_ + taps_ - 1));
    fft_ = std::make_unique<RealFft>(nfft_);
    for (const auto& r : refs_) spectra_.push_back(spectrum(r));

    const auto n = static_cast<Eigen::Index>(refs_.size());
    const auto l = static_cast<Eigen::Index>(taps_);
    Eigen::MatrixXd gram(n * l, n * l);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        const auto c = correlate(spectra_[static_cast<std::size_t>(a)],
                                 spectra_[static_cast<std::size_t>(b)]);
        for (Eigen::Index i = 0; i < l; ++i) {
          for (Eigen::Index j = 0; j < l; ++j) {
            gram(a * l + i, b * l + j) = lag(c, i - j);
          }
        }
      }
    }
    if (!factorize(gram, full_)) {
      throw Error(ErrorKind::kSingularProjection, "reference Gram matrix is not positive definite");
    }
    gram_ = gram;
    own_.resize(refs_.size());
    for (Eigen::Index a = 0; a < n; ++a) {
      if (!factorize(gram.block(a * l, a * l, l, l), own_[static_cast<std::size_t>(a)])) {
        throw Error(ErrorKind::kSingularProjection,
                    "Gram matrix of reference " + std::to_string(a) + " is not positive definite");
      }
    }
  }

  std::size_t filter_length() const noexcept { return taps_; }
  std::size_t signal_length() const noexcept { return length_; }
  std::size_t reference_count() const noexcept { return refs_.size(); }

  Decomposition decompose(std::span<const double> estimate, std::size_t target) const {
    if (estimate.size() != length_) {
      throw Error(ErrorKind::kShape, "estimate length differs from references");
    }
    if (target >= refs_.size()) throw Error(ErrorKind::kParameter, "target index out of range");
    const auto n = refs_.size();
    const auto l = static_cast<Eigen::Index>(taps_);
    const auto est_spec = spectrum(estimate);

    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n) * l);
    for (std::size_t a = 0; a < n; ++a) {
      const auto c = correlate(spectra_[a], est_spec);
      for (Eigen::Index i = 0; i < l; ++i) rhs(static_cast<Eigen::Index>(a) * l + i) = lag(c, i);
    }
    const auto own_block = static_cast<Eigen::Index>(target) * l;
    const Eigen::VectorXd coef_all = refined_solve(full_, gram_, rhs);
    const Eigen::VectorXd coef_own = refined_solve(
        own_[target], gram_.block(own_block, own_block, l, l), rhs.segment(own_block, l));

    const std::size_t out_len = length_ + taps_ - 1;
    std::vector<std::complex<double>> acc(fft_->bins(), 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      add_filtered(acc, a, coef_all.segment(static_cast<Eigen::Index>(a) * l, l));
    }
    const auto projected = synthesize(acc, out_len);

    std::fill(acc.begin(), acc.end(), std::complex<double>{});
    add_filtered(acc, target, coef_own);

    Decomposition d;
    d.filter_length = taps_;
    d.s_target = synthesize(acc, out_len);
    d.e_interf.resize(out_len);
    d.e_artif.resize(out_len);
    for (std::size_t t = 0; t < out_len; ++t) {
      const double x = t < length_ ? estimate[t] : 0.0;
      d.e_interf[t] = projected[t] - d.s_target[t];
      d.e_artif[t] = x - projected[t];
    }
    return d;
  }

 private:
  using Spectrum = std::vector<std::complex<double>>;

  Spectrum spectrum(std::span<const double> x) const {
    std::vector<double> padded(nfft_, 0.0);
    std::copy(x.begin(), x.end(), padded.begin());
    Spectrum out(fft_->bins());
    fft_->forward(padded, out);
    return out;
  }

  // c[k mod nfft] = sum_n a[n] b[n + k]
  std::vector<double> correlate(const Spectrum& a, const Spectrum& b) const {
    Spectrum prod(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) prod[k] = std::conj(a[k]) * b[k];
    std::vector<double> out(nfft_);
    fft_->inverse(prod, out);
    return out;
  }

  double lag(const std::vector<double>& c, Eigen::Index k) const {
    const auto idx = k >= 0 ? static_cast<std::size_t>(k)
                            : nfft_ - static_cast<std::size_t>(-k);
    return c[idx];
  }

  static bool factorize(const Eigen::MatrixXd& g, Eigen::LLT<Eigen::MatrixXd>& out) {
    const double mean_diag = g.trace() / static_cast<double>(g.rows());
    for (double damping = kGramDampingMin; damping <= kGramDamping * 1.0001; damping *= 10.0) {
      Eigen::MatrixXd damped = g;
      damped.diagonal().array() += damping * mean_diag;
      out.compute(damped);
      if (out.info() == Eigen::Success) return true;
    }
    return false;
  }

  template <typename Matrix, typename Vector>
  static Eigen::VectorXd refined_solve(const Eigen::LLT<Eigen::MatrixXd>& damped_factor,
                                       const Matrix& gram, const Vector& rhs) {
    Eigen::VectorXd coef = damped_factor.solve(rhs);
    for (int step = 0; step < kRefinementSteps; ++step) {
      coef += damped_factor.solve(rhs - gram * coef);
    }
    return coef;
  }

  template <typename Coefs>
  void add_filtered(Spectrum& acc, std::size_t ref, const Coefs& coefs) const {
    std::vector<double> h(nfft_, 0.0);
    for (Eigen::Index i = 0; i < coefs.size(); ++i) h[static_cast<std::size_t>(i)] = coefs(i);
    Spectrum hs(fft_->bins());
    fft_->forward(h, hs);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += hs[k] * spectra_[ref][k];
  }

  std::vector<double> synthesize(const Spectrum& spec, std::size_t len) const {
    std::vector<double> out(nfft_);
    fft_->inverse(spec, out);
    out.resize(len);
    return out;
  }

  std::vector<std::vector<double>> refs_;
  std::size_t taps_;
  std::size_t length_ = 0;
  std::size_t nfft_ = 0;
  std::unique_ptr<RealFft> fft_;  // scratch state: one projector per thread
  std::vector<Spectrum> spectra_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> full_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> own_;
};

/// Decomposes `estimate` against delayed copies of `references`:
/// s_target is its projection onto delays 0..L-1 of references[target],
/// e_interf the extra part explained by all references, e_artif the rest.
inline Decomposition project_decompose(std::span<const double> estimate,
                                       const std::vector<std::vector<double>>& references,
                                       std::size_t target_index,
                                       std::size_t filter_length = kDefaultFilterLength) {
  return DelayProjector(references, filter_length).decompose(estimate, target_index);
}

/// 10 log10(num / den), with den at the resolution floor mapped to +inf and a
/// zero numerator to -inf.
inline double ratio_db(double num, double den, double scale) {
  if (num == 0.0) return -kInf;
  if (den <= kResolutionFloor * scale) return kInf;
  return 10.0 * std::log10(num / den);
}

struct EnergyRatios {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

inline EnergyRatios energy_ratios(const Decomposition& d) {
  const std::size_t n = d.s_target.size();
  std::vector<double> distortion(n), signal_plus_interf(n);
  for (std::size_t t = 0; t < n; ++t) {
    distortion[t] = d.e_interf[t] + d.e_artif[t];
    signal_plus_interf[t] = d.s_target[t] + d.e_interf[t];
  }
  const double target = energy(d.s_target);
  const double interf = energy(d.e_interf);
  const double artif = energy(d.e_artif);
  const double scale = target + interf + artif;
  EnergyRatios r;
  r.sdr = ratio_db(target, energy(distortion), scale);
  r.sir = ratio_db(target, interf, scale);
  r.sar = ratio_db(energy(signal_plus_interf), artif, scale);
  return r;
}

inline std::vector<double> remove_mean(std::span<const double> x) {
  const double mean =
      x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
  return out;
}

/// Global (non-framewise) BSS_eval for any number of labeled sources.
/// Signals are mean-removed first.
inline std::vector<EnergyRatios> bss_eval_sources(
    const std::vector<std::vector<double>>& estimates,
    const std::vector<std::vector<double>>& references,
    std::size_t filter_length = kDefaultFilterLength) {
  if (estimates.size() != references.size()) {
    throw Error(ErrorKind::kShape, "estimate and reference counts differ");
  }
  std::vector<std::vector<double>> refs;
  for (const auto& r : references) refs.push_back(remove_mean(r));
  const DelayProjector projector(std::move(refs), filter_length);
  std::vector<EnergyRatios> out;
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    out.push_back(energy_ratios(projector.decompose(remove_mean(estimates[j]), j)));
  }
  return out;
}

/// Scale-invariant SDR: alpha = <est, ref> / |ref|^2,
/// 10 log10(|alpha ref|^2 / |alpha ref - est|^2).
inline double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    throw Error(ErrorKind::kShape, "si_sdr inputs differ in length");
  }
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw Error(ErrorKind::kDomain, "si_sdr of a silent reference");
  const double alpha = dot(estimate, reference) / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = s - estimate[i];
    target += s * s;
    residual += e * e;
  }
  return ratio_db(target, residual, energy(estimate));
}

inline double si_sdr(const AudioBuffer& estimate, const AudioBuffer& reference) {
  const auto e = to_double(estimate.samples());
  const auto r = to_double(reference.samples());
  return si_sdr(std::span<const double>(e), std::span<const double>(r));
}

// ---------------------------------------------------------------------------
// Per-track rows

struct SeparationMetrics {
  std::string track_id;
  std::string source;  // "speech" or "music"
  double sdr = std::numeric_limits<double>::quiet_NaN();
  double sir = std::numeric_limits<double>::quiet_NaN();
  double sar = std::numeric_limits<double>::quiet_NaN();
  double si_sdr = std::numeric_limits<double>::quiet_NaN();
  std::size_t filter_length = kDefaultFilterLength;
};

inline const char* const kSourceNames[] = {"speech", "music"};

inline std::vector<SeparationMetrics> bss_eval(const StemPair& estimates,
                                               const StemPair& references,
                                               std::size_t filter_length = kDefaultFilterLength,
                                               const std::string& track_id = {}) {
  const auto ratios = bss_eval_sources(
      {to_double(estimates.speech.samples()), to_double(estimates.music.samples())},
      {to_double(references.speech.samples()), to_double(references.music.samples())},
      filter_length);
  std::vector<SeparationMetrics> rows;
  for (std::size_t j = 0; j < 2; ++j) {
    SeparationMetrics m;
    m.track_id = track_id;
    m.source = kSourceNames[j];
    m.sdr = ratios[j].sdr;
    m.sir = ratios[j].sir;
    m.sar = ratios[j].sar;
    m.filter_length = filter_length;
    rows.push_back(std::move(m));
  }
  return rows;
}

struct TrackEvaluation {
  std::vector<SeparationMetrics> estimates;
  std::vector<SeparationMetrics> mixture_baseline;  // estimate := mixture
};

/// BSS_eval plus SI-SDR for both sources, and the same for the unprocessed
/// mixture used as both estimates.
inline TrackEvaluation evaluate_track(const std::string& track_id, const AudioBuffer& mixture,
                                      const StemPair& estimates, const StemPair& references,
                                      std::size_t filter_length = kDefaultFilterLength) {
  if (mixture.frames() != references.speech.frames() ||
      estimates.speech.frames() != references.speech.frames()) {
    throw Error(ErrorKind::kAlignment, track_id + ": signals are not aligned");
  }
  const std::vector<std::vector<double>> refs{to_double(references.speech.samples()),
                                              to_double(references.music.samples())};
  std::vector<std::vector<double>> centered;
  for (const auto& r : refs) centered.push_back(remove_mean(r));
  const DelayProjector projector(std::move(centered), filter_length);

  auto rows_for = [&](const std::vector<double>& speech_est, const std::vector<double>& music_est) {
    const std::vector<double>* ests[] = {&speech_est, &music_est};
    std::vector<SeparationMetrics> rows;
    for (std::size_t j = 0; j < 2; ++j) {
      const auto r = energy_ratios(projector.decompose(remove_mean(*ests[j]), j));
      SeparationMetrics m;
      m.track_id = track_id;
      m.source = kSourceNames[j];
      m.sdr = r.sdr;
      m.sir = r.sir;
      m.sar = r.sar;
      m.si_sdr = si_sdr(std::span<const double>(*ests[j]), std::span<const double>(refs[j]));
      m.filter_length = filter_length;
      rows.push_back(std::move(m));
    }
    return rows;
  };
  const auto mix = to_double(mixture.samples());
  return {rows_for(to_double(estimates.speech.samples()), to_double(estimates.music.samples())),
          rows_for(mix, mix)};
}

// ---------------------------------------------------------------------------
// Serialization

/// Shortest round-trip decimal; infinities as "inf" / "-inf".
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& text) {
  if (text == "inf" || text == "+inf") return kInf;
  if (text == "-inf") return -kInf;
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorKind::kFormat, "not a number: '" + text + "'");
  }
  return v;
}

inline constexpr std::string_view kMetricsCsvHeader =
    "track_id,source,sdr,sir,sar,si_sdr,filter_length";

inline void write_metrics_csv(std::ostream& out, const std::vector<SeparationMetrics>& rows) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    out << detail::csv_escape(r.track_id) << ',' << r.source << ',' << format_number(r.sdr) << ','
        << format_number(r.sir) << ',' << format_number(r.sar) << ','
        << format_number(r.si_sdr) << ',' << r.filter_length << '\n';
  }
}

inline nlohmann::ordered_json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

inline double number_from_json(const nlohmann::json& j) {
  return j.is_string() ? parse_number(j.get<std::string>()) : j.get<double>();
}

inline nlohmann::ordered_json metrics_to_json(const std::vector<SeparationMetrics>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"track_id", r.track_id},
                   {"source", r.source},
                   {"sdr", number_json(r.sdr)},
                   {"sir", number_json(r.sir)},
                   {"sar", number_json(r.sar)},
                   {"si_sdr", number_json(r.si_sdr)},
                   {"filter_length", r.filter_length}});
  }
  return arr;
}

inline std::vector<SeparationMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) {
    throw Error(ErrorKind::kFormat, "metrics CSV header must be '" +
                                        std::string(kMetricsCsvHeader) + "'");
  }
  std::vector<SeparationMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw Error(ErrorKind::kFormat, "metrics CSV row needs 7 fields");
    SeparationMetrics m;
    m.track_id = f[0];
    m.source = f[1];
    m.sdr = parse_number(f[2]);
    m.sir = parse_number(f[3]);
    m.sar = parse_number(f[4]);
    m.si_sdr = parse_number(f[5]);
    m.filter_length = static_cast<std::size_t>(std::stoull(f[6]));
    rows.push_back(std::move(m));
  }
  return rows;
}

}  // namespace podmix
