#include "atomtrap/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "atomtrap/error.hpp"
#include "atomtrap/lsq.hpp"

namespace atomtrap::spectrum {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

double gauss_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * kPi); }
double gauss_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double interpolate(const SpectrumSeries& s, double x) {
  const auto& d = s.detuning;
  if (x < d.front() || x > d.back()) return 0.0;
  auto it = std::upper_bound(d.begin(), d.end(), x);
  if (it == d.end()) return s.value.back();
  const auto i = static_cast<std::size_t>(it - d.begin());
  const double f = (x - d[i - 1]) / (d[i] - d[i - 1]);
  return s.value[i - 1] + f * (s.value[i] - s.value[i - 1]);
}

}  // namespace

std::string to_string(Lineshape l) { return l == Lineshape::gaussian ? "gaussian" : "lorentzian"; }

Lineshape lineshape_from_string(const std::string& s) {
  if (s == "lorentzian") return Lineshape::lorentzian;
  if (s == "gaussian") return Lineshape::gaussian;
  throw DataError("unknown laser lineshape '" + s + "' (lorentzian | gaussian)");
}

void InstrumentModel::validate() const {
  if (!(fpi_fwhm > 0.0)) throw DomainError("instrument: fpi_fwhm must be > 0");
  if (!(finesse > 1.0)) throw DomainError("instrument: finesse must be > 1");
  if (!(peak_transmission > 0.0 && peak_transmission <= 1.0))
    throw DomainError("instrument: peak transmission must lie in (0, 1]");
  if (!(laser_fwhm >= 0.0)) throw DomainError("instrument: laser_fwhm must be >= 0");
}

void SpectrumSeries::validate() const {
  if (value.size() != detuning.size() || sigma.size() != detuning.size())
    throw DataError("spectrum: column lengths differ");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(detuning[i]) || (i > 0 && !(detuning[i] > detuning[i - 1])))
      throw DataError("spectrum: detuning grid not strictly increasing at row " + std::to_string(i + 1));
    if (!(value[i] >= 0.0)) throw DataError("spectrum: negative value at row " + std::to_string(i + 1));
    if (!(sigma[i] >= 0.0)) throw DataError("spectrum: negative sigma at row " + std::to_string(i + 1));
  }
}

SpectrumSeries normalize_peak(const SpectrumSeries& s) {
  if (s.size() == 0) throw DataError("spectrum: empty series");
  const double peak = *std::max_element(s.value.begin(), s.value.end());
  if (!(peak > 0.0)) throw DataError("spectrum: no positive value to normalize");
  SpectrumSeries out = s;
  for (auto& v : out.value) v /= peak;
  for (auto& e : out.sigma) e /= peak;
  return out;
}

void DopplerModel::validate() const {
  if (!(temperature >= 0.0)) throw DomainError("doppler: temperature must be >= 0");
  if (!(wavelength > 0.0)) throw DomainError("doppler: wavelength must be > 0");
  geometry.validate();
}

double doppler_sigma(double temperature, double g, double wavelength) {
  if (!(temperature >= 0.0)) throw DomainError("doppler: temperature must be >= 0");
  const auto& k = constants();
  return g * std::sqrt(k.kB * temperature / k.mass) / wavelength * 1e-6;
}

double temperature_from_variance(double var, double g2, double wavelength) {
  if (!(g2 > 0.0)) throw DomainError("doppler: mean g^2 must be > 0");
  const auto& k = constants();
  const double lambda_mhz = wavelength * 1e6;  // m per (1/MHz)
  return var * lambda_mhz * lambda_mhz * k.mass / (k.kB * g2);
}

double GaussianMixture::operator()(double nu) const {
  double sum = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (sigmas[j] > 0.0) sum += weights[j] * gauss_pdf(nu / sigmas[j]) / sigmas[j];
  }
  return sum;
}

double GaussianMixture::variance() const {
  double v = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) v += weights[j] * sigmas[j] * sigmas[j];
  return v;
}

std::string to_string(DopplerKernel k) { return k == DopplerKernel::effective ? "effective" : "mixture"; }

DopplerKernel doppler_kernel_from_string(const std::string& s) {
  if (s == "effective") return DopplerKernel::effective;
  if (s == "mixture") return DopplerKernel::mixture;
  throw DataError("unknown Doppler kernel '" + s + "' (effective | mixture)");
}

GaussianMixture doppler_kernel(const DopplerModel& dop) {
  dop.validate();
  GaussianMixture k;
  k.weights = dop.geometry.weights();
  for (double g : dop.geometry.doppler_factors()) k.sigmas.push_back(doppler_sigma(dop.temperature, g, dop.wavelength));
  if (dop.kernel == DopplerKernel::effective) return {{1.0}, {std::sqrt(k.variance())}};
  return k;
}

double fpi_transmission(double detuning, const InstrumentModel& inst) {
  const double fsr = inst.free_spectral_range();
  const double s = std::sin(kPi * detuning / fsr);
  const double h = std::sin(kPi * inst.fpi_fwhm / (2.0 * fsr));
  return inst.peak_transmission / (1.0 + (s * s) / (h * h));
}

double laser_profile(double detuning, const InstrumentModel& inst) {
  const double w = inst.laser_fwhm;
  if (inst.laser_lineshape == Lineshape::lorentzian) {
    const double g = 0.5 * w;
    return g / (kPi * (detuning * detuning + g * g));
  }
  const double sigma = w / kFwhmPerSigma;
  return gauss_pdf(detuning / sigma) / sigma;
}

SpectrumSeries reference_spectrum(const InstrumentModel& inst, std::span<const double> grid) {
  inst.validate();
  if (grid.size() < 2) throw DataError("reference_spectrum: grid too short");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw DataError("reference_spectrum: grid not strictly increasing");
    if (grid[i] - grid[i - 1] > inst.fpi_fwhm / 10.0 * (1.0 + 1e-12))
      throw DataError("reference_spectrum: grid too coarse (spacing > fpi_fwhm / 10)");
  }
  if (grid.front() > -5.0 || grid.back() < 5.0) throw DataError("reference_spectrum: grid must span +-5 MHz");

  SpectrumSeries out;
  out.detuning.assign(grid.begin(), grid.end());
  out.sigma.assign(grid.size(), 0.0);
  if (inst.laser_fwhm == 0.0) {
    for (double nu : grid) out.value.push_back(fpi_transmission(nu, inst));
    return normalize_peak(out);
  }
  // Integrate over one Airy order, y in [-FSR/2, FSR/2], on a step well
  // below both widths.
  const double half = 0.5 * inst.free_spectral_range();
  const double h = std::min(inst.fpi_fwhm, inst.laser_fwhm) / 40.0;
  const auto n = static_cast<std::size_t>(std::ceil(2.0 * half / h));
  const double step = 2.0 * half / static_cast<double>(n);
  std::vector<double> airy(n + 1);
  for (std::size_t k = 0; k <= n; ++k) airy[k] = fpi_transmission(-half + k * step, inst);
  for (double nu : grid) {
    double sum = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const double y = -half + k * step;
      const double wk = (k == 0 || k == n) ? 0.5 : 1.0;
      sum += wk * airy[k] * laser_profile(nu - y, inst);
    }
    out.value.push_back(sum * step);
  }
  return normalize_peak(out);
}

std::vector<double> convolve_gaussian(const SpectrumSeries& s, double sigma, std::span<const double> at) {
  if (!(sigma >= 0.0)) throw DomainError("convolve_gaussian: sigma must be >= 0");
  std::vector<double> out;
  out.reserve(at.size());
  if (sigma == 0.0) {
    for (double nu : at) out.push_back(interpolate(s, nu));
    return out;
  }
  const auto& x = s.detuning;
  const auto& y = s.value;
  const double reach = 9.0 * sigma;
  std::vector<double> cdf, pdf;
  for (double nu : at) {
    // Segments wholly beyond 9 sigma contribute below 1e-18 relative.
    const auto lo_it = std::lower_bound(x.begin(), x.end(), nu - reach);
    const auto hi_it = std::upper_bound(x.begin(), x.end(), nu + reach);
    std::size_t lo = static_cast<std::size_t>(lo_it - x.begin());
    std::size_t hi = static_cast<std::size_t>(hi_it - x.begin());
    if (lo > 0) --lo;
    if (hi < x.size()) ++hi;
    double sum = 0.0;
    if (hi - lo >= 2) {
      cdf.resize(hi - lo);
      pdf.resize(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) {
        const double u = (x[i] - nu) / sigma;
        cdf[i - lo] = gauss_cdf(u);
        pdf[i - lo] = gauss_pdf(u);
      }
      for (std::size_t i = lo; i + 1 < hi; ++i) {
        // f(x) = y_i + m (x - x_i) on [x_i, x_i+1], x = nu + sigma u.
        const double m = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        const std::size_t a = i - lo, b = a + 1;
        sum += (y[i] + m * (nu - x[i])) * (cdf[b] - cdf[a]) + m * sigma * (pdf[a] - pdf[b]);
      }
    }
    out.push_back(sum);
  }
  return out;
}

SpectrumSeries convolve_gaussian(const SpectrumSeries& s, double sigma) {
  SpectrumSeries out = s;
  out.value = convolve_gaussian(s, sigma, s.detuning);
  out.sigma.assign(s.size(), 0.0);
  return out;
}

SpectrumSeries fluorescence_spectrum(const SpectrumSeries& reference, const DopplerModel& dop) {
  reference.validate();
  const GaussianMixture k = doppler_kernel(dop);
  SpectrumSeries out = reference;
  out.value.assign(reference.size(), 0.0);
  out.sigma.assign(reference.size(), 0.0);
  for (std::size_t j = 0; j < k.weights.size(); ++j) {
    if (k.weights[j] == 0.0) continue;
    const auto part = convolve_gaussian(reference, k.sigmas[j], reference.detuning);
    for (std::size_t i = 0; i < part.size(); ++i) out.value[i] += k.weights[j] * part[i];
  }
  return normalize_peak(out);
}

double fwhm(const SpectrumSeries& s) {
  if (s.size() < 3) throw DataError("fwhm: series too short");
  const auto peak_it = std::max_element(s.value.begin(), s.value.end());
  const auto p = static_cast<std::size_t>(peak_it - s.value.begin());
  const double half = 0.5 * *peak_it;
  if (!(half > 0.0)) throw DataError("fwhm: no positive peak");
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double x0 = s.detuning[inside], x1 = s.detuning[outside];
    const double y0 = s.value[inside], y1 = s.value[outside];
    return x0 + (half - y0) / (y1 - y0) * (x1 - x0);
  };
  std::size_t l = p;
  while (l > 0 && s.value[l - 1] > half) --l;
  std::size_t r = p;
  while (r + 1 < s.size() && s.value[r + 1] > half) ++r;
  if (l == 0 || r + 1 == s.size()) throw DataError("fwhm: half maximum not reached inside the grid");
  return crossing(r, r + 1) - crossing(l, l - 1);
}

SpectrumSeries add_counting_noise(const SpectrumSeries& s, double peak_counts, std::uint64_t seed) {
  if (!(peak_counts > 0.0)) throw DomainError("add_counting_noise: peak counts must be > 0");
  std::mt19937_64 rng(seed);
  SpectrumSeries out = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double mean = s.value[i] * peak_counts;
    const double n = mean > 0.0 ? static_cast<double>(std::poisson_distribution<std::uint64_t>(mean)(rng)) : 0.0;
    out.value[i] = n / peak_counts;
    out.sigma[i] = std::sqrt(std::max(n, 1.0)) / peak_counts;
  }
  return out;
}

std::string to_string(Weighting w) { return w == Weighting::counting ? "counting" : "data"; }

Weighting weighting_from_string(const std::string& s) {
  if (s == "counting") return Weighting::counting;
  if (s == "data") return Weighting::data;
  throw DataError("unknown fit weighting '" + s + "' (counting | data)");
}

TemperatureFit fit_temperature(const SpectrumSeries& reference, const SpectrumSeries& fluor,
                               const BeamGeometry& geometry, double wavelength, Weighting weighting) {
  reference.validate();
  fluor.validate();
  geometry.validate();
  if (reference.size() < 3 || fluor.size() < 3) throw DataError("fit_temperature: spectra too short");
  if (fluor.detuning.front() > reference.detuning.back() || fluor.detuning.back() < reference.detuning.front())
    throw DataError("fit_temperature: reference and fluorescence grids do not overlap");

  const auto n = static_cast<Eigen::Index>(fluor.size());
  double min_sigma = std::numeric_limits<double>::infinity();
  for (double e : fluor.sigma)
    if (e > 0.0) min_sigma = std::min(min_sigma, e);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = fluor.value[i];
    const double e = fluor.sigma[i] > 0.0 ? fluor.sigma[i] : min_sigma;
    w(i) = std::isfinite(e) ? 1.0 / e : 1.0;
  }

  auto model = [&](double var) {
    const auto m = convolve_gaussian(reference, std::sqrt(std::max(var, 0.0)), fluor.detuning);
    return Eigen::Map<const Eigen::VectorXd>(m.data(), n).eval();
  };
  auto amplitude = [&](const Eigen::VectorXd& m) {
    const double den = (m.cwiseProduct(w)).squaredNorm();
    return den > 0.0 ? (y.cwiseProduct(w).cwiseProduct(w)).dot(m) / den : 0.0;
  };
  auto residuals = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    const Eigen::VectorXd m = model(p(0));
    return (y - amplitude(m) * m).cwiseProduct(w);
  };

  // Scan for a starting variance: the width excess gives the scale.
  double scale = 0.05;
  try {
    const double fr = fwhm(reference), ff = fwhm(fluor);
    scale = std::max(scale, (ff * ff - fr * fr) / (8.0 * std::log(2.0)));
  } catch (const DataError&) {
  }
  Eigen::VectorXd start = Eigen::VectorXd::Zero(1);
  double best = residuals(start).squaredNorm();
  for (int i = 0; i <= 60; ++i) {
    Eigen::VectorXd p(1);
    p(0) = 1e-4 * std::pow(40.0 * scale / 1e-4, i / 60.0);
    const double c2 = residuals(p).squaredNorm();
    if (c2 < best) {
      best = c2;
      start = p;
    }
  }

  lsq::Options opts;
  opts.lower = Eigen::VectorXd::Zero(1);
  opts.fd_step = 1e-5;
  opts.fd_min_step = 1e-7;
  auto fit = lsq::levenberg_marquardt(residuals, start, opts);

  // Counting data: the errors of observed counts bias the fit toward
  // narrow profiles when counts are low. Reweight with the variance the
  // fitted model predicts until the estimate settles.
  double counts_per_unit = 0.0;
  if (weighting == Weighting::counting) {
    double sum_v = 0.0, sum_e2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (y(i) > 0.0 && fluor.sigma[i] > 0.0) {
        sum_v += y(i);
        sum_e2 += fluor.sigma[i] * fluor.sigma[i];
      }
    if (sum_e2 > 0.0) counts_per_unit = sum_v / sum_e2;
  }
  if (counts_per_unit > 0.0) {
    for (int iter = 0; iter < 20; ++iter) {
      const Eigen::VectorXd m = model(fit.params(0));
      const Eigen::VectorXd mu = amplitude(m) * m;
      for (Eigen::Index i = 0; i < n; ++i)
        w(i) = std::sqrt(counts_per_unit / std::max(mu(i), 0.1 / counts_per_unit));
      const double prev = fit.params(0);
      fit = lsq::levenberg_marquardt(residuals, fit.params, opts);
      if (std::abs(fit.params(0) - prev) <= 1e-6 * std::max(std::abs(prev), 1e-6)) break;
    }
  }

  TemperatureFit out;
  const auto g = geometry.doppler_factors();
  const auto wts = geometry.weights();
  for (std::size_t j = 0; j < g.size(); ++j) out.g2_eff += wts[j] * g[j] * g[j];
  out.variance = fit.params(0);
  out.clamped = fit.at_bound[0] || fit.params(0) <= 0.0;
  out.variance_err = std::isfinite(fit.covariance(0, 0)) ? std::sqrt(fit.covariance(0, 0)) : 0.0;
  out.amplitude = amplitude(model(out.variance));
  out.chi2_reduced = fit.chi2 / std::max<double>(static_cast<double>(n) - 2.0, 1.0);
  out.points = static_cast<int>(n);
  out.e_kin_uk = temperature_from_variance(out.variance, out.g2_eff, wavelength) * 1e6;
  out.stat_err_uk = temperature_from_variance(out.variance_err, out.g2_eff, wavelength) * 1e6;
  return out;
}

SystematicBounds systematic_bounds(const TemperatureFit& fit, const BeamGeometry& geometry) {
  const auto g = geometry.doppler_factors();
  if (g.empty()) throw DomainError("systematic_bounds: no beams");
  const double g_max = *std::max_element(g.begin(), g.end());
  const double g_min = *std::min_element(g.begin(), g.end());
  if (!(g_max > 0.0)) throw DomainError("systematic_bounds: every beam has zero Doppler factor");
  // E is proportional to 1 / g^2 at fixed fitted variance.
  SystematicBounds b;
  b.e_low_uk = fit.e_kin_uk * fit.g2_eff / (g_max * g_max);
  b.e_high_uk = g_min > 0.0 ? fit.e_kin_uk * fit.g2_eff / (g_min * g_min) : std::numeric_limits<double>::infinity();
  if (fit.e_kin_uk == 0.0) b.e_high_uk = 0.0;
  return b;
}

double peak_position(const SpectrumSeries& s) {
  if (s.size() < 3) throw DataError("peak_position: series too short");
  const auto it = std::max_element(s.value.begin(), s.value.end());
  const auto i = static_cast<std::size_t>(it - s.value.begin());
  if (i == 0 || i + 1 == s.size()) throw DataError("peak_position: no peak inside the scan");
  const double x0 = s.detuning[i - 1], x1 = s.detuning[i], x2 = s.detuning[i + 1];
  const double y0 = s.value[i - 1], y1 = s.value[i], y2 = s.value[i + 1];
  const double d0 = (y1 - y0) / (x1 - x0), d1 = (y2 - y1) / (x2 - x1);
  const double curv = (d1 - d0) / (0.5 * (x2 - x0));
  if (!(curv < 0.0)) return x1;
  return 0.5 * (x0 + x1) - d0 / curv;
}

DriftCompensation cavity_drift_compensate(std::span<const ScanPair> scans) {
  if (scans.empty()) throw DataError("cavity_drift_compensate: no scans");
  DriftCompensation out;
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (const auto& p : scans) {
    p.reference.validate();
    p.fluorescence.validate();
    const double shift = -peak_position(p.reference);
    out.shifts.push_back(shift);
    for (const auto* s : {&p.reference, &p.fluorescence}) {
      lo = std::max(lo, s->detuning.front() + shift);
      hi = std::min(hi, s->detuning.back() + shift);
    }
  }
  std::vector<double> grid;
  for (double x : scans.front().reference.detuning)
    if (x >= lo && x <= hi) grid.push_back(x);
  if (grid.size() < 3) throw DataError("cavity_drift_compensate: scans do not overlap after alignment");

  auto resample = [&](const SpectrumSeries& s, double shift, SpectrumSeries& acc) {
    SpectrumSeries shifted = s;
    for (auto& x : shifted.detuning) x += shift;
    SpectrumSeries err = shifted;
    err.value = shifted.sigma;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      acc.value[i] += interpolate(shifted, grid[i]);
      const double e = interpolate(err, grid[i]);
      acc.sigma[i] += e * e;
    }
  };
  const double count = static_cast<double>(scans.size());
  for (auto* s : {&out.average.reference, &out.average.fluorescence}) {
    s->detuning = grid;
    s->value.assign(grid.size(), 0.0);
    s->sigma.assign(grid.size(), 0.0);
  }
  out.average.reference.metadata = scans.front().reference.metadata;
  out.average.fluorescence.metadata = scans.front().fluorescence.metadata;
  for (std::size_t k = 0; k < scans.size(); ++k) {
    resample(scans[k].reference, out.shifts[k], out.average.reference);
    resample(scans[k].fluorescence, out.shifts[k], out.average.fluorescence);
  }
  for (auto* s : {&out.average.reference, &out.average.fluorescence}) {
    for (auto& v : s->value) v /= count;
    for (auto& e : s->sigma) e = std::sqrt(e) / count;
  }
  return out;
}

}  // namespace atomtrap::spectrum
