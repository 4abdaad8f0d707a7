#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atomtrap/constants.hpp"
#include "atomtrap/params.hpp"

namespace atomtrap::spectrum {

enum class Lineshape { lorentzian, gaussian };

std::string to_string(Lineshape l);
Lineshape lineshape_from_string(const std::string& s);

// Scanning Fabry-Perot plus the excitation laser. Widths in MHz.
struct InstrumentModel {
  double fpi_fwhm = 0.45;
  double finesse = 370.0;
  double peak_transmission = 0.40;
  double laser_fwhm = 0.6;
  Lineshape laser_lineshape = Lineshape::lorentzian;

  double free_spectral_range() const { return finesse * fpi_fwhm; }
  void validate() const;
};

// Detuning grid (MHz from the laser carrier), value and counting error.
struct SpectrumSeries {
  std::vector<double> detuning;
  std::vector<double> value;
  std::vector<double> sigma;
  std::vector<std::string> metadata;

  std::size_t size() const { return detuning.size(); }
  // Strictly increasing grid, equal column lengths, value and sigma >= 0.
  void validate() const;
};

// Peak value scaled to one; sigma scaled alike.
SpectrumSeries normalize_peak(const SpectrumSeries& s);

// effective: one Gaussian carrying the second moment of the per-beam
// mixture (the model the temperature fit assumes). mixture: every beam
// contributes its own Gaussian.
enum class DopplerKernel { effective, mixture };

std::string to_string(DopplerKernel k);
DopplerKernel doppler_kernel_from_string(const std::string& s);

struct DopplerModel {
  double temperature = 105e-6;  // K
  BeamGeometry geometry = BeamGeometry::orthogonal_molasses();
  double wavelength = constants().lambda0;
  DopplerKernel kernel = DopplerKernel::effective;

  void validate() const;
};

// Frequency standard deviation (MHz) of light scattered with Doppler
// factor g by atoms at temperature T: g sqrt(kB T / m) / lambda.
double doppler_sigma(double temperature, double g, double wavelength = constants().lambda0);

// Temperature whose frequency variance (MHz^2) is var for mean g^2 = g2.
// Convention: kB T = m <dv^2> along the scattering vector.
double temperature_from_variance(double var, double g2, double wavelength = constants().lambda0);

// Weighted sum of zero-mean Gaussians (MHz).
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<double> sigmas;

  double operator()(double nu) const;
  // Second moment of the mixture.
  double variance() const;
};

GaussianMixture doppler_kernel(const DopplerModel& dop);

// Single-order Airy function with exact FWHM:
//   T = T_peak / (1 + sin^2(pi nu / FSR) / sin^2(pi w / (2 FSR))),
// periodic in FSR.
double fpi_transmission(double detuning, const InstrumentModel& inst);

// Unit-area laser line of width laser_fwhm.
double laser_profile(double detuning, const InstrumentModel& inst);

// Laser line convolved with one Airy order, sampled on grid and scaled to
// unit peak. The grid must span +-5 MHz with spacing <= fpi_fwhm / 10.
SpectrumSeries reference_spectrum(const InstrumentModel& inst, std::span<const double> grid);

// Convolution of the piecewise-linear interpolant of s (zero outside its
// range) with a Gaussian of width sigma (MHz), evaluated at `at`. Exact for
// the interpolant; sigma = 0 returns the interpolant itself.
std::vector<double> convolve_gaussian(const SpectrumSeries& s, double sigma, std::span<const double> at);
SpectrumSeries convolve_gaussian(const SpectrumSeries& s, double sigma);

// reference convolved with the Doppler kernel, scaled to unit peak.
SpectrumSeries fluorescence_spectrum(const SpectrumSeries& reference, const DopplerModel& dop);

// Full width at half maximum by linear interpolation between the samples
// bracketing each half-maximum crossing.
double fwhm(const SpectrumSeries& s);

// Poisson counting noise on a spectrum whose unit value corresponds to
// peak_counts counts. Values are returned in the same units.
SpectrumSeries add_counting_noise(const SpectrumSeries& s, double peak_counts, std::uint64_t seed);

struct TemperatureFit {
  double e_kin_uk = 0.0;       // kB T in uK
  double stat_err_uk = 0.0;
  double variance = 0.0;       // fitted frequency variance, MHz^2
  double variance_err = 0.0;
  double amplitude = 0.0;
  double g2_eff = 0.0;         // weighted mean of g_j^2 used for E_kin
  double chi2_reduced = 0.0;
  int points = 0;
  bool clamped = false;        // variance pinned at 0
};

// data: weights from the sigma column as given. counting: the sigma
// column only fixes the counts-per-unit scale (value / sigma^2); weights
// come from the fitted model (Poisson variance), iterated to convergence.
enum class Weighting { counting, data };

std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

// Weighted least squares of fluor against A * (reference conv Gaussian(s)),
// the frequency variance s^2 being the only nonlinear parameter (A is
// profiled out). reference is the measured profile, used as sampled.
TemperatureFit fit_temperature(const SpectrumSeries& reference, const SpectrumSeries& fluor,
                               const BeamGeometry& geometry, double wavelength = constants().lambda0,
                               Weighting weighting = Weighting::counting);

struct SystematicBounds {
  double e_low_uk = 0.0;
  double e_high_uk = 0.0;
};

// The fitted variance re-read with g = max_j g_j (lowest energy) and
// g = min_j g_j (highest). Throws DomainError when every g_j is zero.
SystematicBounds systematic_bounds(const TemperatureFit& fit, const BeamGeometry& geometry);

struct ScanPair {
  SpectrumSeries reference;
  SpectrumSeries fluorescence;
};

struct DriftCompensation {
  ScanPair average;
  std::vector<double> shifts;  // MHz added to each pair's detunings
};

// Position of the maximum from a parabola through the top three samples.
// Throws DataError when the maximum sits on the grid edge.
double peak_position(const SpectrumSeries& s);

// Shifts every pair so its reference peak sits at 0, resamples onto the
// first reference grid (points covered by every shifted scan) and
// averages.
DriftCompensation cavity_drift_compensate(std::span<const ScanPair> scans);

}  // namespace atomtrap::spectrum
