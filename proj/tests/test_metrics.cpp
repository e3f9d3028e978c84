#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace podmix;
using testsupport::gaussian;

namespace {

std::vector<double> zero_mean(std::vector<double> x) { return remove_mean(x); }

/// Component of `x` orthogonal to `ref`.
std::vector<double> orthogonalize(std::vector<double> x, const std::vector<double>& ref) {
  const double a = dot(x, ref) / energy(ref);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= a * ref[i];
  return x;
}

std::vector<double> scaled(std::vector<double> x, double k) {
  for (auto& v : x) v *= k;
  return x;
}

std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

/// Least squares onto explicit delay columns, solved with a QR instead of
/// the FFT-built normal equations.
Eigen::VectorXd brute_projection(const std::vector<double>& estimate,
                                 const std::vector<std::vector<double>>& refs, std::size_t taps) {
  const std::size_t t = estimate.size();
  const std::size_t rows = t + taps - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, refs.size() * taps);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    for (std::size_t d = 0; d < taps; ++d) {
      for (std::size_t i = 0; i < t; ++i) a(i + d, r * taps + d) = refs[r][i];
    }
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows);
  for (std::size_t i = 0; i < t; ++i) y(i) = estimate[i];
  return a * a.colPivHouseholderQr().solve(y);
}

}  // namespace

TEST(Decompose, EstimateEqualToReferenceHasNoErrorTerms) {
  const auto s1 = gaussian(4000, 1), s2 = gaussian(4000, 2);
  for (std::size_t taps : {1u, 8u, 64u}) {
    const Decomposition d = project_decompose(s1, {s1, s2}, 0, taps);
    const double target = energy(d.s_target);
    EXPECT_LT(energy(d.e_interf), 1e-16 * target) << taps;
    EXPECT_LT(energy(d.e_artif), 1e-16 * target) << taps;
  }
}

TEST(Decompose, DisjointSupportSingleTap) {
  std::vector<double> s1(2000, 0.0), s2(2000, 0.0);
  const auto g1 = gaussian(1000, 3), g2 = gaussian(1000, 4);
  for (std::size_t i = 0; i < 1000; ++i) {
    s1[i] = g1[i];
    s2[1000 + i] = g2[i];
  }
  s2 = scaled(s2, std::sqrt(energy(s1) / energy(s2)));  // equal norms
  const auto est = add(s1, scaled(s2, 0.1));
  const Decomposition d = project_decompose(est, {s1, s2}, 0, 1);
  for (std::size_t i = 0; i < 2000; ++i) {
    ASSERT_NEAR(d.s_target[i], s1[i], 1e-8);
    ASSERT_NEAR(d.e_interf[i], 0.1 * s2[i], 1e-8);
    ASSERT_NEAR(d.e_artif[i], 0.0, 1e-8);
  }
  EXPECT_NEAR(energy_ratios(d).sir, 20.0, 1e-6);
}

TEST(Decompose, ReconstructsRandomEstimate) {
  const auto s1 = gaussian(3000, 5), s2 = gaussian(3000, 6), est = gaussian(3000, 7);
  const Decomposition d = project_decompose(est, {s1, s2}, 1, 32);
  ASSERT_EQ(d.s_target.size(), 3000u + 31u);
  std::vector<double> sum(d.s_target.size()), padded(d.s_target.size(), 0.0);
  std::copy(est.begin(), est.end(), padded.begin());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = d.s_target[i] + d.e_interf[i] + d.e_artif[i];
  EXPECT_LT(testsupport::rel_error(sum, padded), 1e-8);
}

TEST(Decompose, MatchesExplicitLeastSquares) {
  const auto s1 = gaussian(120, 11), s2 = gaussian(120, 12), est = gaussian(120, 13);
  const std::size_t taps = 6;
  const Decomposition d = project_decompose(est, {s1, s2}, 0, taps);
  const Eigen::VectorXd own = brute_projection(est, {s1}, taps);
  const Eigen::VectorXd all = brute_projection(est, {s1, s2}, taps);
  for (std::size_t i = 0; i < d.s_target.size(); ++i) {
    ASSERT_NEAR(d.s_target[i], own(static_cast<Eigen::Index>(i)), 1e-7);
    ASSERT_NEAR(d.s_target[i] + d.e_interf[i], all(static_cast<Eigen::Index>(i)), 1e-7);
  }
}

TEST(Decompose, ValidatesInputs) {
  const auto s = gaussian(100, 1);
  try {
    project_decompose(s, {s}, 0, 101);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
  try {
    project_decompose(s, {std::vector<double>(100, 0.0)}, 0, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSingularProjection);
  }
  EXPECT_THROW(project_decompose(gaussian(99, 1), {s}, 0, 4), Error);
}

TEST(BssEval, PerfectAndScaledEstimatesAreInfinite) {
  const auto s1 = gaussian(5000, 1), s2 = gaussian(5000, 2);
  for (const auto& r : bss_eval_sources({s1, s2}, {s1, s2}, 16)) {
    EXPECT_EQ(r.sdr, kInf);
    EXPECT_EQ(r.sir, kInf);
    EXPECT_EQ(r.sar, kInf);
  }
  EXPECT_EQ(bss_eval_sources({scaled(s1, 2.0), s2}, {s1, s2}, 1)[0].sdr, kInf);
}

TEST(BssEval, SwappingEstimatesLowersSir) {
  const auto s = gaussian(8000, 3), m = gaussian(8000, 4);
  const auto es = add(s, scaled(m, 0.1)), em = add(m, scaled(s, 0.1));
  const double straight = bss_eval_sources({es, em}, {s, m}, 16)[0].sir;
  const double swapped = bss_eval_sources({em, es}, {s, m}, 16)[0].sir;
  EXPECT_LT(swapped, straight);
}

TEST(BssEval, SingleTapMatchesSiSdr) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = zero_mean(gaussian(3000, seed));
    const auto est = zero_mean(add(scaled(s, 0.7), gaussian(3000, seed + 100, 0.5)));
    EXPECT_NEAR(bss_eval_sources({est}, {s}, 1)[0].sdr, si_sdr(est, s), 1e-6);
  }
}

TEST(SiSdr, Examples) {
  const auto s = gaussian(4000, 9);
  EXPECT_EQ(si_sdr(s, s), kInf);
  EXPECT_EQ(si_sdr(scaled(s, 3.0), s), kInf);
  auto n = orthogonalize(gaussian(4000, 10), s);
  n = scaled(n, std::sqrt(energy(s) / 10.0 / energy(n)));
  EXPECT_NEAR(si_sdr(add(s, n), s), 10.0, 1e-9);
  try {
    si_sdr(s, std::vector<double>(4000, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDomain);
  }
}

TEST(SiSdr, ScaleInvariant) {
  const auto s = gaussian(4000, 1);
  const auto est = add(s, gaussian(4000, 2, 0.3));
  const double base = si_sdr(est, s);
  for (double a : {0.1, 10.0}) EXPECT_NEAR(si_sdr(scaled(est, a), s), base, 1e-9);
}

TEST(EvaluateTrack, MixtureBaselineMatchesGainAtSingleTap) {
  const auto s = zero_mean(gaussian(6000, 21, 0.2));
  auto m = zero_mean(orthogonalize(gaussian(6000, 22, 0.2), s));
  const double g_m = 0.3;
  m = scaled(m, g_m * std::sqrt(energy(s) / energy(m)));
  const auto x = add(s, m);
  const StemPair refs(from_double(s, 44100), from_double(m, 44100));
  const TrackEvaluation ev = evaluate_track("t", from_double(x, 44100), refs, refs, 1);
  EXPECT_NEAR(ev.mixture_baseline[0].sdr, -20.0 * std::log10(g_m), 1e-3);
  EXPECT_NEAR(ev.mixture_baseline[1].sdr, 20.0 * std::log10(g_m), 1e-3);
  EXPECT_EQ(ev.estimates[0].sdr, kInf);
  EXPECT_EQ(ev.estimates[0].filter_length, 1u);
}

TEST(MetricsCsv, RoundTripsSentinels) {
  std::vector<SeparationMetrics> rows(2);
  rows[0] = {"a", "speech", 12.25, kInf, -kInf, 3.0, 512};
  rows[1] = {"a", "music", 0.1, 0.2, 0.3, std::numeric_limits<double>::quiet_NaN(), 1};
  std::stringstream buf;
  write_metrics_csv(buf, rows);
  const auto back = read_metrics_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].sir, kInf);
  EXPECT_EQ(back[0].sar, -kInf);
  EXPECT_EQ(back[0].sdr, 12.25);
  EXPECT_TRUE(std::isnan(back[1].si_sdr));
  EXPECT_EQ(back[1].filter_length, 1u);
  EXPECT_EQ(format_number(0.1), "0.1");
}
