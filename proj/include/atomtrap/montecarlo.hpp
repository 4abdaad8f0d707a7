#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "atomtrap/bloch.hpp"
#include "atomtrap/correlate.hpp"
#include "atomtrap/params.hpp"

namespace atomtrap::mc {

using Picoseconds = std::uint64_t;

inline constexpr double kPicosecond = 1e-12;

inline Picoseconds to_picoseconds(double seconds) {
  return static_cast<Picoseconds>(std::llround(seconds / kPicosecond));
}
inline double to_seconds(Picoseconds ps) { return static_cast<double>(ps) * kPicosecond; }

enum class Channel : std::uint8_t { D1 = 1, D2 = 2 };

struct TimeTag {
  Picoseconds time = 0;
  Channel channel = Channel::D1;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// Detection events sorted by time (ties ordered D1 before D2).
struct TimeTagStream {
  std::vector<TimeTag> tags;
  Picoseconds live_time = 0;

  double live_time_seconds() const { return to_seconds(live_time); }
  std::size_t count(Channel ch) const;

  // Sorted, strictly increasing within each channel, all tags in
  // [0, live_time]. Throws DataError naming the first offending index.
  void validate() const;

  friend bool operator==(const TimeTagStream&, const TimeTagStream&) = default;
};

// Independent generator for (seed, stream, purpose). Streams never share
// state, so any partition of the work reproduces the same numbers.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose);

// Emission times of one atom. Jump counts are indexed like the system's
// decay channels.
struct EmissionRecord {
  std::vector<Picoseconds> times;
  std::vector<std::uint64_t> jumps_per_channel;
  // Survival evaluations that came out non-finite or above one and had to
  // be clamped.
  std::uint64_t norm_warnings = 0;
};

struct JumpOptions {
  bloch::Level initial_level = bloch::Level::c;
  unsigned workers = 1;
  // Independent trajectory segments; part of the reproducibility contract.
  double segment_duration = 0.01;
};

// Quantum-jump unraveling of the master equation. Between jumps the state
// follows exp(-i H_eff t) with H_eff = H - i/2 sum L^dag L; the waiting
// time solves |psi(t)|^2 = u for uniform u and the decay channel is chosen
// with weights rate_k |psi_from_k(t)|^2. Every jump emits a photon.
EmissionRecord quantum_jump_emissions(const bloch::RotatingFrameSystem& sys, double duration, std::uint64_t seed,
                                      const JumpOptions& opts = {});
EmissionRecord quantum_jump_emissions(const ExperimentParams& params, double duration, std::uint64_t seed,
                                      const JumpOptions& opts = {});

// Beam splitter + two detectors: each emission is detected with
// probability detection_efficiency and routed to D1 or D2 with probability
// 1/2; each detector adds Poissonian dark counts. Two tags on the same
// channel in the same picosecond are merged.
TimeTagStream detection_chain(std::span<const Picoseconds> emissions, const ExperimentParams& params, double duration,
                              std::uint64_t seed);

struct CoincidenceHistogram {
  double bin_width = 0.0;       // s
  std::vector<double> tau;      // bin centres k * bin_width, s
  std::vector<std::uint64_t> counts;
  double r1 = 0.0, r2 = 0.0;    // cps
  double live_time = 0.0;       // s
};

// All D1-D2 pairs with tau = t1 - t2 in bins k = -K..K of width
// bin_width centred on k * bin_width, K = floor(window / bin_width).
// Throws EmptyStreamError when either detector has no tags.
CoincidenceHistogram coincidence_histogram(const TimeTagStream& stream, double window, double bin_width);

correlate::CorrelationSeries normalize(const CoincidenceHistogram& hist,
                                       correlate::SeriesKind kind = correlate::SeriesKind::monte_carlo);

// Occupancy dwell (state held from start for duration). The last dwell
// of a trace is cut by the end of the simulation and is not complete.
struct Dwell {
  int occupancy = 0;
  double start = 0.0;
  double duration = 0.0;
  bool complete = true;
};

struct TelegraphTrace {
  double bin_width = 0.1;
  std::vector<std::uint64_t> counts;
  // Majority atom number in each bin.
  std::vector<std::uint8_t> occupancy;
  std::vector<double> occupied_fraction;
  std::vector<Dwell> dwells;
  std::uint64_t collisional_losses = 0;
};

// Two-state trap occupancy: empty -> occupied at load_rate; occupied ->
// empty at loss_rate, or by a second arrival (rate load_rate) that ejects
// both atoms. Counts per bin are Poisson with mean
//   bin * (background + f * (atom_rate - background)),
// f the occupied fraction of the bin.
TelegraphTrace telegraph_signal(const ExperimentParams& params, double duration, std::uint64_t seed,
                                int initial_occupancy = 0);

// frequency[n] = number of bins with n counts.
std::vector<std::uint64_t> occupancy_histogram(const TelegraphTrace& trace);

struct Interval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

// Contiguous bins with count rate above threshold (cps), merged. Throws
// DomainError unless background_rate < threshold < atom_rate.
std::vector<Interval> threshold_gate(const TelegraphTrace& trace, double threshold, double background_rate,
                                     double atom_rate);

// Keeps tags inside the intervals and closes the gaps between them; the
// live time becomes the total interval length.
TimeTagStream gate_stream(const TimeTagStream& stream, std::span<const Interval> intervals);

}  // namespace atomtrap::mc
