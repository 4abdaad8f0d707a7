#include "atomtrap/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atomtrap/correlate.hpp"
#include "atomtrap/error.hpp"
#include "atomtrap/io.hpp"
#include "atomtrap/montecarlo.hpp"
#include "atomtrap/spectrum.hpp"
#include "atomtrap/trap.hpp"

namespace atomtrap::cli {
namespace {

namespace fs = std::filesystem;

struct Global {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = kDefaultSeed;
  std::string out_dir = ".";
  bool quiet = false;
  bool verbose = false;
  unsigned workers = 1;
};

class Runner {
 public:
  Runner(const Global& g, std::ostream& out) : g_(g), out_(out) {}

  io::Config config() const {
    std::string path = g_.config_path;
    if (path.empty()) {
      if (const char* env = std::getenv("ATOMTRAP_CONFIG"); env && *env) path = env;
    }
    if (path.empty()) return io::parse_config("", "<defaults>", g_.overrides);
    if (g_.verbose) out_ << "config: " << path << '\n';
    return io::load_config(path, g_.overrides);
  }

  fs::path output(const std::string& name) const { return fs::path(g_.out_dir) / name; }

  template <typename Writer>
  void write(const std::string& name, Writer&& w) const {
    std::ostringstream ss;
    w(ss);
    io::write_text_file(output(name), ss.str());
    if (g_.verbose) out_ << "wrote " << output(name).string() << '\n';
  }

  void report(const std::string& key, double value) const {
    if (!g_.quiet) out_ << key << '=' << io::format_double(value) << '\n';
  }
  void note(const std::string& line) const {
    if (!g_.quiet) out_ << line << '\n';
  }

  const Global& global() const { return g_; }

 private:
  const Global& g_;
  std::ostream& out_;
};

std::vector<std::string> run_metadata(const io::Config& cfg, std::optional<std::uint64_t> seed) {
  std::vector<std::string> m;
  m.push_back(" trap_depth_mk=" + io::format_double(cfg.experiment.trap_depth_mk));
  m.push_back(" delta_cl_mhz=" + io::format_double(angular_to_mhz(cfg.experiment.delta_cool)));
  m.push_back(" intensity_cl_mw_cm2=" + io::format_double(cfg.experiment.intensity_cool));
  if (seed) m.push_back(" seed=" + std::to_string(*seed));
  return m;
}

// g2 -------------------------------------------------------------------------

struct G2Args {
  double tau_max = 150e-9;
  double tau_step = 0.5e-9;
};

void cmd_g2(const Runner& r, const G2Args& a) {
  if (!(a.tau_max >= 0.0) || !(a.tau_step > 0.0)) throw DomainError("g2: need tau-max >= 0 and tau-step > 0");
  const io::Config cfg = r.config();
  const auto n = static_cast<long>(std::floor(a.tau_max / a.tau_step + 1e-9));
  if (n > 2'000'000) throw DomainError("g2: grid too large (reduce tau-max or raise tau-step)");
  std::vector<double> grid;
  for (long k = -n; k <= n; ++k) grid.push_back(static_cast<double>(k) * a.tau_step);

  auto g2 = correlate::g2_deterministic(cfg.experiment, grid);
  g2.metadata = run_metadata(cfg, std::nullopt);
  auto with_env = correlate::apply_envelope(g2, cfg.envelope);
  with_env.metadata.push_back(" envelope_amplitude=" + io::format_double(cfg.envelope.amplitude));
  with_env.metadata.push_back(" envelope_rate_per_s=" + io::format_double(cfg.envelope.rate));
  r.write("g2.csv", [&](std::ostream& o) { io::write_series(g2, o); });
  r.write("g2_envelope.csv", [&](std::ostream& o) { io::write_series(with_env, o); });

  double peak = 0.0;
  for (double v : g2.g2) peak = std::max(peak, v);
  r.report("g2_at_zero", g2.g2[static_cast<std::size_t>(n)]);
  r.report("g2_max", peak);
  if (n >= 3) {
    correlate::CorrelationSeries half;
    half.tau.assign(g2.tau.begin() + n, g2.tau.end());
    half.g2.assign(g2.g2.begin() + n, g2.g2.end());
    half.sigma.assign(half.tau.size(), 0.0);
    try {
      r.report("first_oscillation_mhz", correlate::first_oscillation_frequency(half) * 1e-6);
    } catch (const NumericalError&) {
      r.note("first_oscillation_mhz=none");
    }
  }
}

// hbt ------------------------------------------------------------------------

struct HbtArgs {
  double duration = 0.5;
  double window = 150e-9;
  double bin = 2e-9;
  bool csv_tags = false;
};

void cmd_hbt(const Runner& r, const HbtArgs& a) {
  if (a.duration < 0.0) throw DomainError("hbt: duration must be >= 0");
  if (a.duration == 0.0) throw EmptyStreamError("hbt: zero duration gives an empty time-tag stream");
  const io::Config cfg = r.config();
  const auto& p = cfg.experiment;
  const std::uint64_t seed = r.global().seed;

  mc::JumpOptions jo;
  jo.workers = r.global().workers;
  const auto em = mc::quantum_jump_emissions(p, a.duration, seed, jo);
  const auto stream = mc::detection_chain(em.times, p, a.duration, seed);
  {
    const auto path = r.output("timetags.ttag");
    io::write_timetags(stream, path);
  }
  if (a.csv_tags) r.write("timetags.csv", [&](std::ostream& o) { io::write_timetags_csv(stream, o); });

  const auto hist = mc::coincidence_histogram(stream, a.window, a.bin);
  auto g2 = mc::normalize(hist, correlate::SeriesKind::measured);
  g2.metadata = run_metadata(cfg, seed);
  g2.metadata.push_back(" detection_efficiency=" + io::format_double(p.detection_efficiency));
  g2.metadata.push_back(" dark_rate_cps=" + io::format_double(p.dark_rate_per_detector));
  r.write("g2_hbt.csv", [&](std::ostream& o) { io::write_series(g2, o); });

  const std::size_t zero = (hist.tau.size() - 1) / 2;
  r.report("emissions", static_cast<double>(em.times.size()));
  r.report("rate_d1_cps", hist.r1);
  r.report("rate_d2_cps", hist.r2);
  r.report("g2_zero_bin", g2.g2[zero]);
  if (em.norm_warnings > 0) r.report("norm_warnings", static_cast<double>(em.norm_warnings));

  const double b = p.dark_rate_per_detector;
  if (b > 0.0 && hist.r1 > b && hist.r2 > b) {
    auto corrected = correlate::background_correct(g2, hist.r1, hist.r2, b, b);
    r.write("g2_hbt_corrected.csv", [&](std::ostream& o) { io::write_series(corrected, o); });
    r.report("g2_zero_bin_corrected", corrected.g2[zero]);
  }
}

// telegraph ------------------------------------------------------------------

struct TelegraphArgs {
  double duration = 1000.0;
};

void cmd_telegraph(const Runner& r, const TelegraphArgs& a) {
  if (!(a.duration > 0.0)) throw DomainError("telegraph: duration must be > 0");
  const io::Config cfg = r.config();
  const auto& p = cfg.experiment;
  const auto tr = mc::telegraph_signal(p, a.duration, r.global().seed);
  const io::OccupancyHistogram hist{mc::occupancy_histogram(tr)};
  r.write("telegraph.csv", [&](std::ostream& o) { io::write_series(tr, o); });
  r.write("occupancy_histogram.csv", [&](std::ostream& o) { io::write_histogram(hist, o); });

  double occupied = 0.0;
  for (double f : tr.occupied_fraction) occupied += f;
  r.report("bins", static_cast<double>(tr.counts.size()));
  r.report("occupied_fraction", occupied / static_cast<double>(tr.counts.size()));
  r.report("collisional_losses", static_cast<double>(tr.collisional_losses));
  const auto gates = mc::threshold_gate(tr, p.gate_threshold, p.background_rate, p.atom_rate);
  double gated = 0.0;
  for (const auto& iv : gates) gated += iv.length();
  r.report("gated_fraction", gated / a.duration);
}

// spectrum -------------------------------------------------------------------

struct SpectrumArgs {
  std::string mode = "synthesize";
  double span = 6.0;
  double step = 0.02;
  double peak_counts = 100.0;
  bool noise_free = false;
  std::string weighting = "counting";
  std::string reference;
  std::string fluorescence;
};

void cmd_spectrum(const Runner& r, const SpectrumArgs& a) {
  const io::Config cfg = r.config();
  if (a.mode == "synthesize") {
    if (!(a.span >= 5.0) || !(a.step > 0.0)) throw DomainError("spectrum: need span >= 5 MHz and step > 0");
    std::vector<double> grid;
    const auto n = static_cast<long>(std::floor(a.span / a.step + 1e-9));
    for (long k = -n; k <= n; ++k) grid.push_back(static_cast<double>(k) * a.step);
    auto ref = spectrum::reference_spectrum(cfg.instrument, grid);
    auto fl = spectrum::fluorescence_spectrum(ref, cfg.doppler);
    if (!a.noise_free) fl = spectrum::add_counting_noise(fl, a.peak_counts, r.global().seed);
    ref.metadata = {" laser_lineshape=" + spectrum::to_string(cfg.instrument.laser_lineshape),
                    " laser_fwhm_mhz=" + io::format_double(cfg.instrument.laser_fwhm),
                    " fpi_fwhm_mhz=" + io::format_double(cfg.instrument.fpi_fwhm)};
    fl.metadata = ref.metadata;
    fl.metadata.push_back(" temperature_uk=" + io::format_double(cfg.doppler.temperature * 1e6));
    fl.metadata.push_back(" doppler_kernel=" + spectrum::to_string(cfg.doppler.kernel));
    if (!a.noise_free) {
      fl.metadata.push_back(" peak_counts=" + io::format_double(a.peak_counts));
      fl.metadata.push_back(" seed=" + std::to_string(r.global().seed));
    }
    r.write("reference.csv", [&](std::ostream& o) { io::write_series(ref, o); });
    r.write("fluorescence.csv", [&](std::ostream& o) { io::write_series(fl, o); });
    r.report("reference_fwhm_mhz", spectrum::fwhm(ref));
    r.report("fluorescence_fwhm_mhz", spectrum::fwhm(spectrum::normalize_peak(fl)));
    return;
  }
  if (a.mode != "fit") throw DomainError("spectrum: mode must be synthesize or fit");
  if (a.reference.empty() || a.fluorescence.empty())
    throw DomainError("spectrum fit: --reference and --fluorescence are required");
  const auto ref = io::read_spectrum(a.reference);
  const auto fl = io::read_spectrum(a.fluorescence);
  const auto fit = spectrum::fit_temperature(ref, fl, cfg.doppler.geometry, cfg.doppler.wavelength,
                                             spectrum::weighting_from_string(a.weighting));
  const auto bounds = spectrum::systematic_bounds(fit, cfg.doppler.geometry);
  io::FitReport rep;
  rep.entries = {{"E_kin_uK", fit.e_kin_uk},
                 {"stat_err_uK", fit.stat_err_uk},
                 {"sys_low_uK", bounds.e_low_uk},
                 {"sys_high_uK", bounds.e_high_uk},
                 {"chi2_red", fit.chi2_reduced},
                 {"variance_mhz2", fit.variance},
                 {"variance_err_mhz2", fit.variance_err},
                 {"clamped", fit.clamped ? 1.0 : 0.0}};
  r.write("fit_report.txt", [&](std::ostream& o) { io::write_report(rep, o); });
  for (const auto& [k, v] : rep.entries) r.report(k, v);
}

// trap -----------------------------------------------------------------------

void cmd_trap(const Runner& r) {
  const io::Config cfg = r.config();
  const auto& p = cfg.experiment;
  io::FitReport rep;
  rep.entries = {
      {"trap_depth_mk", trap_depth(p.trap_power, p.trap_waist, p.trap_wavelength)},
      {"scattering_rate_hz", photon_scattering_rate(p.trap_power, p.trap_waist, p.trap_wavelength)},
      {"light_shift_mhz", angular_to_mhz(p.stark_coefficient * p.trap_depth_mk)},
      {"effective_detuning_mhz", angular_to_mhz(effective_cooling_detuning(p.trap_depth_mk, p))},
      {"effective_rabi_mhz", angular_to_mhz(effective_rabi(p.trap_depth_mk, p))},
      {"omega1_mhz", angular_to_mhz(p.omega1)},
      {"omega2_mhz", angular_to_mhz(p.omega2)},
      {"omega3_mhz", angular_to_mhz(p.omega3)},
  };
  r.write("trap_report.txt", [&](std::ostream& o) { io::write_report(rep, o); });
  for (const auto& [k, v] : rep.entries) r.report(k, v);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-atom resonance fluorescence: g2, HBT, telegraph, spectra and trap numbers"};
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--config", g.config_path, "INI config file (default: $ATOMTRAP_CONFIG, else built-in values)");
  app.add_option("--override", g.overrides, "section.key=value, repeatable");
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "worker threads for Monte Carlo")->check(CLI::Range(1u, 256u));
  auto* quiet = app.add_flag("--quiet,-q", g.quiet, "no summary on stdout");
  app.add_flag("--verbose,-v", g.verbose, "list written files")->excludes(quiet);

  G2Args g2a;
  auto* g2 = app.add_subcommand("g2", "deterministic g2(tau), with and without the motional envelope");
  g2->add_option("--tau-max", g2a.tau_max, "largest |tau| (s)")->capture_default_str();
  g2->add_option("--tau-step", g2a.tau_step, "grid step (s)")->capture_default_str();

  HbtArgs hba;
  auto* hbt = app.add_subcommand("hbt", "Monte Carlo photon stream through the HBT setup");
  hbt->add_option("--duration", hba.duration, "simulated time (s)")->capture_default_str();
  hbt->add_option("--window", hba.window, "coincidence window (s)")->capture_default_str();
  hbt->add_option("--bin", hba.bin, "histogram bin (s)")->capture_default_str();
  hbt->add_flag("--csv-tags", hba.csv_tags, "also write the time tags as CSV");

  TelegraphArgs tga;
  auto* tel = app.add_subcommand("telegraph", "trap occupancy and photon counts per bin");
  tel->add_option("--duration", tga.duration, "simulated time (s)")->capture_default_str();

  SpectrumArgs spa;
  auto* spec = app.add_subcommand("spectrum", "synthesize or fit Fabry-Perot spectra");
  spec->add_option("--mode", spa.mode, "synthesize | fit")
      ->check(CLI::IsMember({"synthesize", "fit"}))
      ->capture_default_str();
  spec->add_option("--span", spa.span, "grid half-span (MHz)")->capture_default_str();
  spec->add_option("--step", spa.step, "grid step (MHz)")->capture_default_str();
  spec->add_option("--peak-counts", spa.peak_counts, "counts at the fluorescence peak")->capture_default_str();
  spec->add_flag("--noise-free", spa.noise_free, "skip counting noise");
  spec->add_option("--weighting", spa.weighting, "fit weights: counting | data")
      ->check(CLI::IsMember({"counting", "data"}))
      ->capture_default_str();
  spec->add_option("--reference", spa.reference, "reference spectrum CSV (fit mode)");
  spec->add_option("--fluorescence", spa.fluorescence, "fluorescence spectrum CSV (fit mode)");

  auto* trap = app.add_subcommand("trap", "trap depth, scattering rate and effective Rabi frequency");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const Runner runner(g, out);
  try {
    if (g2->parsed()) cmd_g2(runner, g2a);
    if (hbt->parsed()) cmd_hbt(runner, hba);
    if (tel->parsed()) cmd_telegraph(runner, tga);
    if (spec->parsed()) cmd_spectrum(runner, spa);
    if (trap->parsed()) cmd_trap(runner);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace atomtrap::cli
