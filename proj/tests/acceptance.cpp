// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "atomtrap/bloch.hpp"
#include "atomtrap/correlate.hpp"
#include "atomtrap/error.hpp"
#include "atomtrap/io.hpp"
#include "atomtrap/montecarlo.hpp"
#include "atomtrap/spectrum.hpp"
#include "atomtrap/trap.hpp"
#include "oracles.hpp"

using namespace atomtrap;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::vector<double> grid(double step, double lo, double hi) {
  std::vector<double> g;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

unsigned worker_count() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

ExperimentParams ideal_detection() {
  ExperimentParams p;
  p.detection_efficiency = 1.0;
  p.dark_rate_per_detector = 0.0;
  return p;
}

// Mean of the deterministic g2 over the bin [centre - w/2, centre + w/2).
std::vector<double> bin_averaged_g2(const ExperimentParams& p, std::span<const double> centres, double width) {
  const int sub = 16;
  std::vector<double> fine;
  for (double c : centres)
    for (int j = 0; j < sub; ++j) fine.push_back(c - 0.5 * width + (j + 0.5) * width / sub);
  const auto det = correlate::g2_deterministic(p, fine);
  std::vector<double> out;
  for (std::size_t k = 0; k < centres.size(); ++k) {
    double s = 0.0;
    for (int j = 0; j < sub; ++j) s += det.g2[k * sub + static_cast<std::size_t>(j)];
    out.push_back(s / sub);
  }
  return out;
}

// Shared Monte Carlo run with ideal detectors (criteria 1, 4, 5).
struct SharedMc {
  ExperimentParams params = ideal_detection();
  double duration = 1.2;
  std::uint64_t seed = 20030923;
  mc::EmissionRecord record;

  const mc::EmissionRecord& get() {
    if (record.times.empty()) {
      mc::JumpOptions jo;
      jo.workers = worker_count();
      record = mc::quantum_jump_emissions(params, duration, seed, jo);
    }
    return record;
  }
};

SharedMc shared;

// 1 ---------------------------------------------------------------------------

Outcome antibunching() {
  Outcome o;
  const ExperimentParams p;
  const std::vector<double> zero{0.0};
  const double det = correlate::g2_deterministic(p, zero).g2[0];
  o.require(std::abs(det) <= 1e-12, "deterministic g2(0)=" + num(det));

  const auto& rec = shared.get();
  o.require(rec.times.size() >= 1'000'000, "emissions=" + std::to_string(rec.times.size()));
  const auto stream = mc::detection_chain(rec.times, shared.params, shared.duration, shared.seed + 1);
  const auto g2 = mc::normalize(mc::coincidence_histogram(stream, 20e-9, 1e-9));
  const std::size_t z = (g2.size() - 1) / 2;
  o.require(shared.params.dark_rate_per_detector == 0.0, "dark rate 0");
  o.require(g2.g2[z] <= 0.05, "MC zero bin (1 ns)=" + num(g2.g2[z]) + " +- " + num(g2.sigma[z]));
  return o;
}

// 2 ---------------------------------------------------------------------------

Outcome two_level_oracle() {
  Outcome o;
  const double g = constants().gamma;
  const bloch::LevelMask pair{false, false, true, true};
  correlate::G2Options opts;
  opts.support = pair;
  const auto t = grid(0.1e-9, 0.0, 200e-9);
  for (auto [w, d] : {std::pair{0.3, 0.0}, {1.0, 0.5}, {2.5, -1.0}, {4.0, 2.0}, {8.0, -3.5}}) {
    const auto sys = bloch::build_system(0.0, 0.0, w * g, bloch::Detunings{0.0, 0.0, d * g}, g);
    const auto s = correlate::g2_deterministic(sys, t, opts);
    const oracle::TwoLevel tl{w * g, d * g, g};
    double sup = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) sup = std::max(sup, std::abs(s.g2[i] - tl.g2(t[i])));
    o.require(sup <= 1e-5, "(Omega,Delta)=(" + num(w) + "," + num(d) + ")Gamma sup=" + num(sup, 2));
  }
  return o;
}

// 3 ---------------------------------------------------------------------------

Outcome four_level_features() {
  Outcome o;
  const auto t = grid(0.1e-9, 0.0, 150e-9);
  ExperimentParams shallow;
  const auto s = correlate::g2_deterministic(shallow, t);
  const double peak = *std::max_element(s.g2.begin(), s.g2.end());
  o.require(peak > 2.0, "max g2=" + num(peak));
  for (auto [depth, expect] : {std::pair{0.38, 47.5}, {0.81, 62.5}}) {
    ExperimentParams p;
    p.trap_depth_mk = depth;
    const double f = correlate::first_oscillation_frequency(correlate::g2_deterministic(p, t)) * 1e-6;
    o.require(std::abs(f - expect) <= 0.05 * expect, "U=" + num(depth) + " mK: " + num(f) + " MHz");
  }
  return o;
}

// 4 ---------------------------------------------------------------------------

Outcome mc_equivalence() {
  Outcome o;
  const auto& rec = shared.get();
  o.require(rec.times.size() >= 1'000'000, "emissions=" + std::to_string(rec.times.size()));
  const auto stream = mc::detection_chain(rec.times, shared.params, shared.duration, shared.seed + 2);
  const double bin = 2e-9;
  const auto g2 = mc::normalize(mc::coincidence_histogram(stream, 150e-9, bin));
  std::vector<double> centres;
  std::vector<std::size_t> index;
  for (std::size_t k = 0; k < g2.size(); ++k)
    if (g2.tau[k] >= 0.0 && g2.tau[k] <= 150e-9 + 1e-15) {
      centres.push_back(g2.tau[k]);
      index.push_back(k);
    }
  const auto expected = bin_averaged_g2(shared.params, centres, bin);
  int inside = 0;
  for (std::size_t i = 0; i < index.size(); ++i)
    if (oracle::within_sigma(g2.g2[index[i]], expected[i], g2.sigma[index[i]])) ++inside;
  const double frac = static_cast<double>(inside) / static_cast<double>(index.size());
  o.require(frac >= 0.95, std::to_string(inside) + "/" + std::to_string(index.size()) + " bins within 3 sigma");
  return o;
}

// 5 ---------------------------------------------------------------------------

Outcome normalization() {
  Outcome o;
  {
    // Two independent Poisson detectors: dark counts only.
    ExperimentParams p;
    p.detection_efficiency = 0.0;
    p.dark_rate_per_detector = 2e5;
    const std::vector<mc::Picoseconds> none;
    const auto stream = mc::detection_chain(none, p, 10.0, 7);
    const auto g2 = mc::normalize(mc::coincidence_histogram(stream, 150e-9, 2e-9));
    int outside = 0;
    double wsum = 0.0, w = 0.0;
    for (std::size_t k = 0; k < g2.size(); ++k) {
      if (!oracle::within_sigma(g2.g2[k], 1.0, g2.sigma[k])) ++outside;
      wsum += g2.g2[k] / (g2.sigma[k] * g2.sigma[k]);
      w += 1.0 / (g2.sigma[k] * g2.sigma[k]);
    }
    // A fair per-bin 3 sigma test still lets 0.27 % of bins out.
    const double n = static_cast<double>(g2.size());
    const double allowed = 0.0027 * n + 3.0 * std::sqrt(0.0027 * n);
    o.require(outside <= allowed,
              "Poisson: " + std::to_string(outside) + "/" + std::to_string(g2.size()) + " bins beyond 3 sigma");
    const double mean = wsum / w;
    o.require(oracle::within_sigma(mean, 1.0, 1.0 / std::sqrt(w)), "Poisson mean g2=" + num(mean, 5));
  }
  {
    const auto& rec = shared.get();
    ExperimentParams p;
    p.detection_efficiency = 0.5;
    p.dark_rate_per_detector = 2e5;
    const double bin = 2e-9;
    const auto stream = mc::detection_chain(rec.times, p, shared.duration, shared.seed + 3);
    const auto hist = mc::coincidence_histogram(stream, 10e-9, bin);
    const auto raw = mc::normalize(hist);
    const auto corrected =
        correlate::background_correct(raw, hist.r1, hist.r2, p.dark_rate_per_detector, p.dark_rate_per_detector);
    const std::size_t z = (raw.size() - 1) / 2;
    const std::vector<double> centre{0.0};
    const double truth = bin_averaged_g2(p, centre, bin)[0];
    o.require(oracle::within_sigma(corrected.g2[z], truth, corrected.sigma[z]),
              "dark 2e5 cps: raw g2(0)=" + num(raw.g2[z]) + ", corrected " + num(corrected.g2[z]) + " +- " +
                  num(corrected.sigma[z]) + " vs dark-free " + num(truth));
  }
  return o;
}

// 6 ---------------------------------------------------------------------------

Outcome telegraph() {
  Outcome o;
  const ExperimentParams p;
  const auto start = std::chrono::steady_clock::now();
  const auto tr = mc::telegraph_signal(p, 1e4, 6);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto h = mc::occupancy_histogram(tr);
  const double low_mean = p.background_rate * p.telegraph_bin, high_mean = p.atom_rate * p.telegraph_bin;

  auto mode_in = [&](double lo, double hi) {
    std::size_t best = static_cast<std::size_t>(lo);
    for (auto i = static_cast<std::size_t>(lo); i <= static_cast<std::size_t>(hi) && i < h.size(); ++i)
      if (h[i] > h[best]) best = i;
    return best;
  };
  const double mid = 0.5 * (low_mean + high_mean);
  const auto m0 = mode_in(0, mid), m1 = mode_in(mid, 2.0 * high_mean);
  const auto valley = mode_in(low_mean + 4.0 * std::sqrt(low_mean), high_mean - 4.0 * std::sqrt(high_mean));
  o.require(std::abs(static_cast<double>(m0) - low_mean) <= std::sqrt(low_mean) &&
                std::abs(static_cast<double>(m1) - high_mean) <= std::sqrt(high_mean),
            "modes " + std::to_string(m0) + " / " + std::to_string(m1));
  o.require(h[valley] * 5 < std::min(h[m0], h[m1]), "valley height " + std::to_string(h[valley]));

  const double ceiling = high_mean + 5.0 * std::sqrt(high_mean);
  std::uint64_t above = 0;
  for (std::size_t i = static_cast<std::size_t>(std::floor(ceiling)) + 1; i < h.size(); ++i) above += h[i];
  o.require(above == 0, std::to_string(above) + " bins above " + num(ceiling));

  std::vector<double> on, off;
  for (const auto& d : tr.dwells)
    if (d.complete) (d.occupancy ? on : off).push_back(d.duration);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double tau_on = 1.0 / (p.loss_rate + p.load_rate), tau_off = 1.0 / p.load_rate;
  o.require(oracle::within_sigma(mean(on), tau_on, tau_on / std::sqrt(on.size())),
            "occupied dwell " + num(mean(on)) + " s vs " + num(tau_on) + " (n=" + std::to_string(on.size()) + ")");
  o.require(oracle::within_sigma(mean(off), tau_off, tau_off / std::sqrt(off.size())),
            "empty dwell " + num(mean(off)) + " s vs " + num(tau_off));
  const double q = p.load_rate / (p.load_rate + p.loss_rate);
  const double n_on = static_cast<double>(on.size());
  o.require(oracle::within_sigma(static_cast<double>(tr.collisional_losses), q * n_on, std::sqrt(n_on * q * (1 - q))),
            "collisional losses " + std::to_string(tr.collisional_losses) + " vs " + num(q * n_on));
  o.require(secs <= 60.0, "1e4 s simulated in " + num(secs, 3) + " s");
  return o;
}

// 7 ---------------------------------------------------------------------------

Outcome trap_physics() {
  Outcome o;
  const double u = trap_depth(44e-3, 3.5e-6, 856e-9);
  const double r = photon_scattering_rate(44e-3, 3.5e-6, 856e-9);
  o.require(std::abs(u - 1.0) <= 0.10, "depth " + num(u) + " mK");
  o.require(std::abs(r - 24.0) <= 0.15 * 24.0, "scattering " + num(r) + " 1/s");
  return o;
}

// 8 ---------------------------------------------------------------------------

Outcome temperature_round_trip() {
  Outcome o;
  const auto g = grid(0.02, -6.0, 6.0);
  const spectrum::InstrumentModel inst;
  const auto ref = spectrum::reference_spectrum(inst, g);
  spectrum::DopplerModel dop;
  dop.temperature = 105e-6;
  const auto fl = spectrum::fluorescence_spectrum(ref, dop);

  const int seeds = 100;
  int covered = 0;
  double err_sum = 0.0, mean = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto fit = spectrum::fit_temperature(ref, spectrum::add_counting_noise(fl, 100.0, 1000 + s), dop.geometry);
    if (std::abs(fit.e_kin_uk - 105.0) <= fit.stat_err_uk) ++covered;
    err_sum += fit.stat_err_uk;
    mean += fit.e_kin_uk;
  }
  const double band = 3.0 * std::sqrt(seeds * 0.6827 * 0.3173);
  o.require(std::abs(covered - 0.6827 * seeds) <= band,
            "1 sigma coverage " + std::to_string(covered) + "/" + std::to_string(seeds) + " (mean " +
                num(mean / seeds) + " uK, stat err " + num(err_sum / seeds, 3) + " uK)");

  double worst = 0.0;
  for (auto shape : {spectrum::Lineshape::lorentzian, spectrum::Lineshape::gaussian}) {
    spectrum::InstrumentModel im;
    im.laser_lineshape = shape;
    const auto r = spectrum::reference_spectrum(im, g);
    for (double t : {20.0, 40.0, 70.0, 105.0, 150.0, 200.0, 250.0, 300.0}) {
      spectrum::DopplerModel d;
      d.temperature = t * 1e-6;
      const auto fit = spectrum::fit_temperature(r, spectrum::fluorescence_spectrum(r, d), d.geometry);
      worst = std::max(worst, std::abs(fit.e_kin_uk - t) / t);
    }
  }
  o.require(worst <= 0.01, "noise-free 20..300 uK worst relative error " + num(worst, 2));

  // A 0.90 MHz reference broadened to 1.00 MHz, read with the default
  // geometry, must land inside the published 105 +- 24 uK.
  auto gaussian = [&](double fwhm) {
    spectrum::SpectrumSeries s;
    const double sd = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    for (double x : g) {
      s.detuning.push_back(x);
      s.value.push_back(std::exp(-0.5 * x * x / (sd * sd)));
      s.sigma.push_back(0.01);
    }
    return s;
  };
  const auto broad = spectrum::fit_temperature(gaussian(0.90), gaussian(1.00), dop.geometry, constants().lambda0,
                                               spectrum::Weighting::data);
  o.require(std::abs(broad.e_kin_uk - 105.0) <= 24.0, "0.90 -> 1.00 MHz gives " + num(broad.e_kin_uk) + " uK");
  return o;
}

// 9 ---------------------------------------------------------------------------

bool parses_or_reports(std::string_view bytes) {
  try {
    io::parse_document(bytes, "fuzz");
    return true;
  } catch (const DataError&) {
    return true;
  } catch (...) {
    return false;
  }
}

template <typename T, typename W>
std::string written(const T& v, W&& w) {
  std::ostringstream o;
  w(v, o);
  return o.str();
}

Outcome invariants() {
  Outcome o;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double gam = constants().gamma;

  {
    int outputs = 0, bad = 0;
    for (int k = 0; k < 20; ++k) {
      const bloch::Detunings det{3.0 * gam * u(rng), 3.0 * gam * u(rng), 3.0 * gam * u(rng)};
      const auto sys = bloch::build_system(4.0 * gam * std::abs(u(rng)), 4.0 * gam * std::abs(u(rng)),
                                           4.0 * gam * std::abs(u(rng)), det, gam);
      const bloch::DensityMatrix rho0(oracle::random_density(rng));
      for (const auto& r : bloch::evolve(rho0, sys, grid(2e-9, 0.0, 100e-9))) {
        ++outputs;
        if (!r.is_physical()) ++bad;
      }
    }
    o.require(bad == 0, "integration outputs physical " + std::to_string(outputs - bad) + "/" +
                            std::to_string(outputs));
  }
  {
    const auto sys = bloch::build_system(ExperimentParams{});
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      Eigen::Matrix4cd m;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = {u(rng), u(rng)};
      worst = std::max(worst, std::abs(sys.relaxation(m).trace()) / gam);
    }
    o.require(worst <= 1e-12, "relaxation trace-free, worst " + num(worst, 2));
  }
  {
    mc::TimeTagStream tags;
    mc::Picoseconds t = 0;
    for (int i = 0; i < 5000; ++i) {
      t += 1 + rng() % 100000;
      tags.tags.push_back({t, (rng() & 1) ? mc::Channel::D1 : mc::Channel::D2});
    }
    tags.live_time = t + 1;
    correlate::CorrelationSeries c;
    c.kind = correlate::SeriesKind::monte_carlo;
    c.metadata = {" seed=1"};
    spectrum::SpectrumSeries s;
    for (int i = 0; i < 200; ++i) {
      c.tau.push_back(i * 1e-9 / 3.0);
      c.g2.push_back(std::abs(u(rng)) * 3.0);
      c.sigma.push_back(std::abs(u(rng)) * 0.1);
      s.detuning.push_back(i * 0.02 - 2.0);
      s.value.push_back(std::abs(u(rng)));
      s.sigma.push_back(std::abs(u(rng)) * 0.01);
    }
    mc::TelegraphTrace tr;
    tr.bin_width = 0.1;
    for (int i = 0; i < 300; ++i) tr.counts.push_back(rng() % 400);
    const io::OccupancyHistogram hist{{0, 5, 2, 9}};
    const io::FitReport rep{{{"E_kin_uK", 104.9}, {"stat_err_uK", 1.0 / 3.0}}};

    std::vector<std::string> docs;
    int ok = 0, total = 0;
    auto check = [&](bool same) {
      ++total;
      if (same) ++ok;
    };
    auto bin = written(tags, [](auto& v, auto& os) { io::write_timetags(v, os); });
    check(std::get<mc::TimeTagStream>(io::parse_document(bin).payload) == tags);
    auto csv = written(tags, [](auto& v, auto& os) { io::write_timetags_csv(v, os); });
    check(std::get<mc::TimeTagStream>(io::parse_document(csv).payload) == tags);
    auto cs = written(c, [](auto& v, auto& os) { io::write_series(v, os); });
    const auto cb = std::get<correlate::CorrelationSeries>(io::parse_document(cs).payload);
    check(cb.tau == c.tau && cb.g2 == c.g2 && cb.sigma == c.sigma && cb.kind == c.kind && cb.metadata == c.metadata);
    auto ss = written(s, [](auto& v, auto& os) { io::write_series(v, os); });
    const auto sb = std::get<spectrum::SpectrumSeries>(io::parse_document(ss).payload);
    check(sb.detuning == s.detuning && sb.value == s.value && sb.sigma == s.sigma);
    auto ts = written(tr, [](auto& v, auto& os) { io::write_series(v, os); });
    check(std::get<mc::TelegraphTrace>(io::parse_document(ts).payload).counts == tr.counts);
    auto hs = written(hist, [](auto& v, auto& os) { io::write_histogram(v, os); });
    check(std::get<io::OccupancyHistogram>(io::parse_document(hs).payload) == hist);
    auto rs = written(rep, [](auto& v, auto& os) { io::write_report(v, os); });
    check(std::get<io::FitReport>(io::parse_document(rs).payload) == rep);
    o.require(ok == total, "write/read identity " + std::to_string(ok) + "/" + std::to_string(total) + " formats");

    docs = {bin, csv, cs, ss, ts, hs, rs, "[laser]\ndelta_cl_mhz = -31 MHz\n[trap]\ndepth_mk = 0.81\n"};
    int crashes = 0, cases = 0;
    std::uniform_int_distribution<int> byte(0, 255);
    for (int i = 0; i < 4000; ++i) {
      std::string b(rng() % 400, '\0');
      for (auto& ch : b) ch = static_cast<char>(byte(rng));
      for (const std::string& prefix : {std::string(), std::string("#TTAG v1 live_time_ps=9\n"),
                                        std::string("#kind=correlation series=measured\n"), std::string("[trap]\n")}) {
        ++cases;
        if (!parses_or_reports(prefix + b)) ++crashes;
      }
    }
    for (const auto& d : docs)
      for (int i = 0; i < 1500; ++i) {
        std::string b = d.substr(0, std::min<std::size_t>(d.size(), 4096));
        for (int e = 0; e < 1 + static_cast<int>(rng() % 4) && !b.empty(); ++e) {
          const std::size_t pos = rng() % b.size();
          switch (rng() % 3) {
            case 0: b[pos] = static_cast<char>(byte(rng)); break;
            case 1: b.erase(pos, 1 + rng() % 8); break;
            default: b.insert(pos, 1, static_cast<char>(byte(rng))); break;
          }
        }
        ++cases;
        if (!parses_or_reports(b)) ++crashes;
      }
    o.require(crashes == 0, "fuzz " + std::to_string(cases) + " inputs, " + std::to_string(crashes) + " escapes");
  }
  {
    const auto p = ideal_detection();
    std::vector<mc::EmissionRecord> runs;
    for (unsigned w : {1u, 2u, 3u, 8u}) {
      mc::JumpOptions jo;
      jo.workers = w;
      runs.push_back(mc::quantum_jump_emissions(p, 0.05, 42, jo));
    }
    bool same = true;
    for (const auto& r : runs) same = same && r.times == runs[0].times && r.jumps_per_channel == runs[0].jumps_per_channel;
    const auto a = mc::detection_chain(runs[0].times, ExperimentParams{}, 0.05, 43);
    const auto b = mc::detection_chain(runs[3].times, ExperimentParams{}, 0.05, 43);
    const auto ta = mc::telegraph_signal(ExperimentParams{}, 500.0, 44), tb = mc::telegraph_signal(ExperimentParams{}, 500.0, 44);
    same = same && a == b && ta.counts == tb.counts;
    o.require(same, "fixed seed identical across 1/2/3/8 workers (" + std::to_string(runs[0].times.size()) +
                        " emissions)");
  }
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "antibunching", 300.0, antibunching},
      {2, "two-level oracle", 60.0, two_level_oracle},
      {3, "four-level bunching and light shift", 60.0, four_level_features},
      {4, "Monte Carlo vs deterministic g2", 600.0, mc_equivalence},
      {5, "normalization and background correction", 300.0, normalization},
      {6, "telegraph occupancy", 60.0, telegraph},
      {7, "trap depth and scattering", 10.0, trap_physics},
      {8, "temperature round trip", 300.0, temperature_round_trip},
      {9, "invariants", 300.0, invariants},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) o.require(false, "runtime over " + num(c.budget_s) + " s");
    if (!o.pass) ++failed;
    std::printf("criterion %d %s: %s [%s] (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
