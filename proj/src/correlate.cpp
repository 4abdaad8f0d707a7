#include "atomtrap/correlate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atomtrap/error.hpp"
#include "atomtrap/lsq.hpp"

namespace atomtrap::correlate {

std::string to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::deterministic: return "deterministic";
    case SeriesKind::monte_carlo: return "monte-carlo";
    case SeriesKind::measured: return "measured";
  }
  return "measured";
}

SeriesKind series_kind_from_string(const std::string& s) {
  if (s == "deterministic") return SeriesKind::deterministic;
  if (s == "monte-carlo") return SeriesKind::monte_carlo;
  if (s == "measured") return SeriesKind::measured;
  throw DataError("unknown correlation series kind '" + s + "'");
}

void CorrelationSeries::validate() const {
  if (g2.size() != tau.size() || sigma.size() != tau.size())
    throw DataError("correlation series: column lengths differ");
  if (kind != SeriesKind::measured)
    for (double v : g2)
      if (!(v >= 0.0)) throw DataError("correlation series: negative g2");
  for (double s : sigma)
    if (!(s >= 0.0)) throw DataError("correlation series: negative sigma");
}

double DiffusionEnvelope::factor(double tau) const { return 1.0 + amplitude * std::exp(-rate * std::abs(tau)); }

void DiffusionEnvelope::validate() const {
  if (!(amplitude >= 0.0)) throw DomainError("envelope amplitude must be >= 0");
  if (!(rate > 0.0)) throw DomainError("envelope rate must be > 0");
}

bloch::DensityMatrix emission_reset_state(const bloch::DensityMatrix& rho_ss) {
  using bloch::Level;
  const double aa = rho_ss.population(Level::a);
  const double dd = rho_ss.population(Level::d);
  if (!(aa + dd > 0.0)) throw DomainError("emission reset: steady state has no excited population");
  const double bb = 0.5 * aa;
  const double cc = 0.5 * aa + dd;
  const double norm = bb + cc;
  return bloch::DensityMatrix::diagonal(0.0, bb / norm, cc / norm, 0.0);
}

CorrelationSeries g2_deterministic(const bloch::RotatingFrameSystem& sys, std::span<const double> tau_grid,
                                   const G2Options& opts) {
  const bloch::DensityMatrix rho_ss = bloch::steady_state(sys, opts.support);
  const double excited_ss = rho_ss.excited_population();
  const bloch::DensityMatrix reset = emission_reset_state(rho_ss);

  std::vector<double> abs_tau;
  abs_tau.reserve(tau_grid.size());
  for (double t : tau_grid) abs_tau.push_back(std::abs(t));
  std::vector<double> times = abs_tau;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  const auto states = bloch::evolve(reset, sys, times, opts.evolve);

  CorrelationSeries out;
  out.kind = SeriesKind::deterministic;
  out.tau.assign(tau_grid.begin(), tau_grid.end());
  out.sigma.assign(tau_grid.size(), 0.0);
  out.g2.reserve(tau_grid.size());
  for (double t : abs_tau) {
    const auto k = std::lower_bound(times.begin(), times.end(), t) - times.begin();
    out.g2.push_back(states[static_cast<std::size_t>(k)].excited_population() / excited_ss);
  }
  return out;
}

CorrelationSeries g2_deterministic(const ExperimentParams& params, std::span<const double> tau_grid,
                                   const G2Options& opts) {
  return g2_deterministic(bloch::build_system(params), tau_grid, opts);
}

CorrelationSeries apply_envelope(const CorrelationSeries& series, const DiffusionEnvelope& env) {
  env.validate();
  CorrelationSeries out = series;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double f = env.factor(out.tau[i]);
    out.g2[i] *= f;
    out.sigma[i] *= f;
  }
  return out;
}

EnvelopeFit fit_envelope(const CorrelationSeries& series, double tau_min) {
  series.validate();
  if (!(tau_min >= 0.0)) throw DomainError("fit_envelope: tau_min must be >= 0");
  std::vector<double> x, y, w;
  double span = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double t = std::abs(series.tau[i]);
    if (t < tau_min || !(series.sigma[i] > 0.0)) continue;
    x.push_back(t);
    y.push_back(series.g2[i]);
    w.push_back(1.0 / series.sigma[i]);
    span = std::max(span, t);
  }
  if (x.size() < 4 || span < 2.0 * tau_min)
    throw DataError("fit_envelope: insufficient tau range beyond tau_min");

  const auto n = static_cast<Eigen::Index>(x.size());
  // Rate in 1/us keeps both parameters of order one.
  auto model_residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i)
      r(i) = (y[i] - 1.0 - p(0) * std::exp(-p(1) * 1e6 * x[i])) * w[i];
    return r;
  };
  // Amplitude is linear: for fixed k it has a closed form. Scan k to start.
  auto best_amplitude = [&](double k_us) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = std::exp(-k_us * 1e6 * x[i]) * w[i];
      num += e * (y[i] - 1.0) * w[i];
      den += e * e;
    }
    return den > 0.0 ? num / den : 0.0;
  };
  Eigen::VectorXd start(2);
  double best_chi2 = std::numeric_limits<double>::infinity();
  const double k_lo = 0.05 / (span * 1e6), k_hi = 20.0 / (std::max(tau_min, span / x.size()) * 1e6);
  for (int i = 0; i <= 200; ++i) {
    const double k = k_lo * std::pow(k_hi / k_lo, i / 200.0);
    Eigen::VectorXd p(2);
    p << best_amplitude(k), k;
    const double c2 = model_residuals(p).squaredNorm();
    if (c2 < best_chi2) {
      best_chi2 = c2;
      start = p;
    }
  }

  lsq::Options opts;
  opts.lower = Eigen::Vector2d(std::numeric_limits<double>::quiet_NaN(), 1e-12);
  const auto fit = lsq::levenberg_marquardt(model_residuals, start, opts);

  EnvelopeFit out;
  out.amplitude_raw = fit.params(0);
  out.clamped = fit.params(0) < 0.0;
  out.envelope = {std::max(fit.params(0), 0.0), fit.params(1) * 1e6};
  out.chi2_reduced = fit.chi2_reduced();
  out.points = static_cast<int>(n);
  if (fit.covariance.allFinite()) {
    out.amplitude_error = std::sqrt(fit.covariance(0, 0));
    out.rate_error = std::sqrt(fit.covariance(1, 1)) * 1e6;
    out.covariance_amplitude_rate = fit.covariance(0, 1) * 1e6;
  } else {
    // Rate undetermined (A = 0): report the amplitude error at fixed rate.
    double info = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = std::exp(-fit.params(1) * 1e6 * x[i]) * w[i];
      info += e * e;
    }
    out.amplitude_error = 1.0 / std::sqrt(info);
    out.rate_error = std::numeric_limits<double>::infinity();
  }
  return out;
}

CorrelationSeries normalize_histogram(std::span<const double> tau_centers, std::span<const std::uint64_t> counts,
                                      double r1, double r2, double bin_width, double live_time, SeriesKind kind) {
  if (!(r1 > 0.0) || !(r2 > 0.0)) throw DataError("normalize_histogram: count rates must be > 0");
  if (!(bin_width > 0.0) || !(live_time > 0.0))
    throw DataError("normalize_histogram: bin width and live time must be > 0");
  if (tau_centers.size() != counts.size()) throw DataError("normalize_histogram: tau and counts differ in length");
  const double scale = 1.0 / (r1 * r2 * bin_width * live_time);
  CorrelationSeries out;
  out.kind = kind;
  out.tau.assign(tau_centers.begin(), tau_centers.end());
  for (std::uint64_t c : counts) {
    const double n = static_cast<double>(c);
    out.g2.push_back(n * scale);
    out.sigma.push_back(std::sqrt(std::max(n, 1.0)) * scale);
  }
  return out;
}

CorrelationSeries background_correct(const CorrelationSeries& series, double r1, double r2, double b1, double b2) {
  if (!(b1 >= 0.0) || !(b2 >= 0.0)) throw DomainError("background_correct: background rates must be >= 0");
  const double s1 = r1 - b1, s2 = r2 - b2;
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw DataError("background_correct: signal rate is not positive (r <= b)");
  CorrelationSeries out = series;
  out.kind = SeriesKind::measured;
  const double gain = r1 * r2 / (s1 * s2);
  const double offset = (s1 * b2 + s2 * b1 + b1 * b2) / (s1 * s2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.g2[i] = series.g2[i] * gain - offset;
    out.sigma[i] = series.sigma[i] * gain;
  }
  return out;
}

double background_mix(double g2_signal, double r1, double r2, double b1, double b2) {
  const double s1 = r1 - b1, s2 = r2 - b2;
  return (g2_signal * s1 * s2 + s1 * b2 + s2 * b1 + b1 * b2) / (r1 * r2);
}

double first_oscillation_frequency(const CorrelationSeries& series) {
  const auto& t = series.tau;
  const auto& g = series.g2;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    if (t[i - 1] < 0.0 || t[i] <= t[i - 1]) throw DomainError("first_oscillation_frequency: need sorted tau >= 0");
    if (g[i] < g[i - 1] && g[i] <= g[i + 1]) {
      // Vertex of the parabola through the three samples.
      const double h0 = t[i] - t[i - 1], h1 = t[i + 1] - t[i];
      const double d0 = (g[i] - g[i - 1]) / h0, d1 = (g[i + 1] - g[i]) / h1;
      const double curv = (d1 - d0) / (0.5 * (h0 + h1));
      double tmin = t[i];
      if (curv > 0.0) tmin = 0.5 * (t[i - 1] + t[i]) - d0 / curv;
      return 1.0 / tmin;
    }
  }
  throw NumericalError("first_oscillation_frequency: no local minimum at tau > 0");
}

}  // namespace atomtrap::correlate
