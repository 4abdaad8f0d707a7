#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atomtrap/bloch.hpp"
#include "atomtrap/params.hpp"

namespace atomtrap::correlate {

enum class SeriesKind { deterministic, monte_carlo, measured };

std::string to_string(SeriesKind k);
SeriesKind series_kind_from_string(const std::string& s);

// g2 sampled on a tau grid (s). sigma is 0 for deterministic series.
struct CorrelationSeries {
  std::vector<double> tau;
  std::vector<double> g2;
  std::vector<double> sigma;
  SeriesKind kind = SeriesKind::deterministic;
  // '#' header lines (without the kind line), preserved verbatim on I/O.
  std::vector<std::string> metadata;

  std::size_t size() const { return tau.size(); }
  // Equal column lengths; g2 >= 0 for deterministic and Monte Carlo
  // series (background-corrected measurements may dip below zero).
  void validate() const;
};

// Motional bunching factor 1 + A exp(-k |tau|).
struct DiffusionEnvelope {
  double amplitude = 0.0;
  double rate = 1.0;  // 1/s

  double factor(double tau) const;
  void validate() const;
};

// Post-emission state: excited populations moved to the ground levels by
// the decay branching (a -> b, c at 1/2 each; d -> c), coherences dropped,
// trace renormalized. Throws DomainError when rho_aa + rho_dd <= 0.
bloch::DensityMatrix emission_reset_state(const bloch::DensityMatrix& rho_ss);

struct G2Options {
  bloch::LevelMask support = bloch::kAllLevels;
  bloch::EvolveOptions evolve{};
};

// (rho_aa(tau) + rho_dd(tau)) / (rho_aa + rho_dd)_ss starting from the reset
// state. Evaluated at |tau|, so the series is symmetric.
CorrelationSeries g2_deterministic(const ExperimentParams& params, std::span<const double> tau_grid,
                                   const G2Options& opts = {});
CorrelationSeries g2_deterministic(const bloch::RotatingFrameSystem& sys, std::span<const double> tau_grid,
                                   const G2Options& opts = {});

CorrelationSeries apply_envelope(const CorrelationSeries& series, const DiffusionEnvelope& env);

struct EnvelopeFit {
  DiffusionEnvelope envelope;   // amplitude clamped to >= 0
  double amplitude_raw = 0.0;   // unclamped least-squares value
  double amplitude_error = 0.0;
  double rate_error = 0.0;
  double covariance_amplitude_rate = 0.0;
  double chi2_reduced = 0.0;
  bool clamped = false;
  int points = 0;
};

// Weighted fit of 1 + A exp(-k |tau|) to the points with |tau| >= tau_min.
EnvelopeFit fit_envelope(const CorrelationSeries& series, double tau_min = 0.5e-6);

// Coincidences per bin divided by r1 r2 dtau T. A zero bin gets g2 = 0 and
// the error of one count.
CorrelationSeries normalize_histogram(std::span<const double> tau_centers, std::span<const std::uint64_t> counts,
                                      double r1, double r2, double bin_width, double live_time,
                                      SeriesKind kind = SeriesKind::measured);

// Removes accidental coincidences from uncorrelated Poissonian background
// b1, b2 (cps) given total rates r1, r2:
//   g2_corr = (g2 r1 r2 - s1 b2 - s2 b1 - b1 b2) / (s1 s2),  s_i = r_i - b_i.
CorrelationSeries background_correct(const CorrelationSeries& series, double r1, double r2, double b1, double b2);

// Inverse of background_correct: what a detector with background sees.
double background_mix(double g2_signal, double r1, double r2, double b1, double b2);

// 1 / (first local minimum of g2 at tau > 0), refined by a parabola through
// the three samples around it. Requires a sorted grid with tau >= 0.
double first_oscillation_frequency(const CorrelationSeries& series);

}  // namespace atomtrap::correlate
