#include "atomtrap/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <limits>
#include <thread>

#include <unsupported/Eigen/MatrixFunctions>

#include "atomtrap/error.hpp"

namespace atomtrap::mc {
namespace {

constexpr std::uint64_t kPurposeJumps = 0;
constexpr std::uint64_t kPurposeDetection = 1;
constexpr std::uint64_t kPurposeDark = 2;  // + detector index
constexpr std::uint64_t kPurposeTelegraph = 8;
constexpr std::uint64_t kPurposeTelegraphCounts = 9;

using Vector4 = Eigen::Vector4cd;
using std::complex;

double uniform_open(std::mt19937_64& rng) {
  // (0, 1]: never returns zero, so log and root bracketing stay finite.
  return 1.0 - std::generate_canonical<double, 64>(rng);
}

// exp(-i H_eff t) applied to a basis state, via the eigendecomposition of
// H_eff when it is well conditioned and a Pade matrix exponential
// otherwise.
class NoJumpPropagator {
 public:
  explicit NoJumpPropagator(const bloch::Matrix4& heff) : heff_(heff) {
    Eigen::ComplexEigenSolver<bloch::Matrix4> es(heff);
    if (es.info() == Eigen::Success) {
      vecs_ = es.eigenvectors();
      vals_ = es.eigenvalues();
      Eigen::FullPivLU<bloch::Matrix4> lu(vecs_);
      if (lu.isInvertible()) {
        inv_ = lu.inverse();
        const double cond = vecs_.norm() * inv_.norm();
        const double recon = (vecs_ * vals_.asDiagonal() * inv_ - heff).norm();
        diagonal_ = cond < 1e8 && recon <= 1e-9 * std::max(heff.norm(), 1.0);
      }
    }
  }

  Vector4 apply(double t, int start) const {
    if (diagonal_) {
      Vector4 c = inv_.col(start);
      for (int k = 0; k < 4; ++k) c(k) *= std::exp(complex<double>(0.0, -1.0) * vals_(k) * t);
      return vecs_ * c;
    }
    const bloch::Matrix4 u = (complex<double>(0.0, -t) * heff_).exp();
    return u.col(start);
  }

 private:
  bloch::Matrix4 heff_;
  bloch::Matrix4 vecs_, inv_;
  Eigen::Vector4cd vals_;
  bool diagonal_ = false;
};

struct SegmentResult {
  std::vector<Picoseconds> times;
  std::vector<std::uint64_t> jumps;
  std::uint64_t norm_warnings = 0;
};

class JumpSampler {
 public:
  explicit JumpSampler(const bloch::RotatingFrameSystem& sys)
      : sys_(sys), prop_(sys.effective_hamiltonian()) {}

  // Simulates [0, length) from `level`; times are offsets in ps added to
  // `origin`. Returns the level at the end of the segment in `level`.
  SegmentResult run(double length, Picoseconds origin, int& level, std::mt19937_64& rng) const {
    SegmentResult out;
    out.jumps.assign(sys_.decays.size(), 0);
    double t = 0.0;
    while (true) {
      const double u = uniform_open(rng);
      const double remaining = length - t;
      const double s_end = survival(remaining, level, out.norm_warnings);
      if (s_end >= u) break;  // no jump before the segment ends
      const double wait = solve_wait(u, remaining, level, out.norm_warnings);
      t += wait;
      const Vector4 psi = prop_.apply(wait, level);
      double total = 0.0;
      std::vector<double> w(sys_.decays.size());
      for (std::size_t k = 0; k < w.size(); ++k) {
        const auto& ch = sys_.decays[k];
        w[k] = ch.rate * std::norm(psi(bloch::index(ch.from)));
        total += w[k];
      }
      if (!(total > 0.0)) {
        // Survival fell below u while no channel carries weight: only
        // possible through rounding. Count it and keep the state.
        ++out.norm_warnings;
        continue;
      }
      double pick = std::generate_canonical<double, 64>(rng) * total;
      std::size_t k = 0;
      while (k + 1 < w.size() && pick >= w[k]) pick -= w[k++];
      level = bloch::index(sys_.decays[k].to);
      ++out.jumps[k];
      out.times.push_back(origin + to_picoseconds(t));
    }
    return out;
  }

 private:
  double survival(double t, int level, std::uint64_t& warnings) const {
    const double s = prop_.apply(t, level).squaredNorm();
    if (!std::isfinite(s) || s > 1.0 + 1e-9 || s < 0.0) {
      ++warnings;
      return std::isfinite(s) ? std::clamp(s, 0.0, 1.0) : 0.0;
    }
    return std::min(s, 1.0);
  }

  // -dS/dt: total jump rate of the unnormalized state.
  double decay_rate(double t, int level) const {
    const Vector4 psi = prop_.apply(t, level);
    double r = 0.0;
    for (const auto& ch : sys_.decays) r += ch.rate * std::norm(psi(bloch::index(ch.from)));
    return r;
  }

  // Root of S(t) = u in (0, limit]; S(limit) <= u is guaranteed.
  double solve_wait(double u, double limit, int level, std::uint64_t& warnings) const {
    double lo = 0.0;
    double hi = std::min(limit, 1.0 / std::max(sys_.gamma, 1.0));
    while (hi < limit && survival(hi, level, warnings) > u) {
      lo = hi;
      hi = std::min(2.0 * hi, limit);
    }
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200 && hi - lo > 1e-16 + 1e-14 * hi; ++it) {
      const double f = survival(t, level, warnings) - u;
      if (f > 0.0)
        lo = t;
      else
        hi = t;
      const double d = decay_rate(t, level);
      double next = d > 0.0 ? t + f / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) < 1e-16) {
        t = next;
        break;
      }
      t = next;
    }
    return t;
  }

  const bloch::RotatingFrameSystem& sys_;
  NoJumpPropagator prop_;
};

}  // namespace

std::size_t TimeTagStream::count(Channel ch) const {
  return static_cast<std::size_t>(
      std::count_if(tags.begin(), tags.end(), [ch](const TimeTag& t) { return t.channel == ch; }));
}

void TimeTagStream::validate() const {
  Picoseconds last[3] = {0, 0, 0};
  bool seen[3] = {false, false, false};
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& t = tags[i];
    const auto ch = static_cast<int>(t.channel);
    if (ch != 1 && ch != 2) throw DataError("time tags: invalid channel at record " + std::to_string(i + 1));
    if (i > 0 && t.time < tags[i - 1].time)
      throw DataError("time tags: not sorted at record " + std::to_string(i + 1));
    if (seen[ch] && t.time <= last[ch])
      throw DataError("time tags: channel not strictly increasing at record " + std::to_string(i + 1));
    if (t.time > live_time) throw DataError("time tags: record " + std::to_string(i + 1) + " beyond live time");
    seen[ch] = true;
    last[ch] = t.time;
  }
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(purpose), hi(purpose)};
  return std::mt19937_64(seq);
}

EmissionRecord quantum_jump_emissions(const bloch::RotatingFrameSystem& sys, double duration, std::uint64_t seed,
                                      const JumpOptions& opts) {
  if (!(duration > 0.0)) throw DomainError("quantum_jump_emissions: duration must be > 0");
  if (!(opts.segment_duration > 0.0)) throw DomainError("quantum_jump_emissions: segment duration must be > 0");
  const JumpSampler sampler(sys);

  const Picoseconds total_ps = to_picoseconds(duration);
  const Picoseconds seg_ps = std::max<Picoseconds>(to_picoseconds(opts.segment_duration), 1);
  const std::size_t segments = static_cast<std::size_t>((total_ps + seg_ps - 1) / seg_ps);
  std::vector<SegmentResult> results(segments);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t s; (s = next.fetch_add(1)) < segments;) {
      const Picoseconds origin = s * seg_ps;
      const Picoseconds end = std::min(origin + seg_ps, total_ps);
      auto rng = make_rng(seed, s, kPurposeJumps);
      int level = bloch::index(opts.initial_level);
      results[s] = sampler.run(to_seconds(end - origin), origin, level, rng);
    }
  };
  const unsigned n_workers = std::clamp<unsigned>(opts.workers, 1, static_cast<unsigned>(std::max<std::size_t>(segments, 1)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }

  EmissionRecord out;
  out.jumps_per_channel.assign(sys.decays.size(), 0);
  std::size_t n = 0;
  for (const auto& r : results) n += r.times.size();
  out.times.reserve(n);
  for (auto& r : results) {
    out.times.insert(out.times.end(), r.times.begin(), r.times.end());
    for (std::size_t k = 0; k < r.jumps.size(); ++k) out.jumps_per_channel[k] += r.jumps[k];
    out.norm_warnings += r.norm_warnings;
  }
  return out;
}

EmissionRecord quantum_jump_emissions(const ExperimentParams& params, double duration, std::uint64_t seed,
                                      const JumpOptions& opts) {
  return quantum_jump_emissions(bloch::build_system(params), duration, seed, opts);
}

TimeTagStream detection_chain(std::span<const Picoseconds> emissions, const ExperimentParams& params, double duration,
                              std::uint64_t seed) {
  if (!(duration > 0.0)) throw DomainError("detection_chain: duration must be > 0");
  const double eff = params.detection_efficiency;
  if (!(eff >= 0.0 && eff <= 1.0)) throw DomainError("detection_chain: efficiency must be in [0, 1]");
  if (!(params.dark_rate_per_detector >= 0.0)) throw DomainError("detection_chain: dark rate must be >= 0");
  if (!std::is_sorted(emissions.begin(), emissions.end()))
    throw DataError("detection_chain: emissions must be sorted");

  TimeTagStream out;
  out.live_time = to_picoseconds(duration);
  auto rng = make_rng(seed, 0, kPurposeDetection);
  for (Picoseconds t : emissions) {
    if (t > out.live_time) break;
    if (std::generate_canonical<double, 64>(rng) >= eff) continue;
    const Channel ch = (rng() >> 63) ? Channel::D2 : Channel::D1;
    out.tags.push_back({t, ch});
  }

  if (params.dark_rate_per_detector > 0.0) {
    for (std::uint64_t det = 0; det < 2; ++det) {
      auto drng = make_rng(seed, 0, kPurposeDark + det);
      std::exponential_distribution<double> gap(params.dark_rate_per_detector);
      const Channel ch = det == 0 ? Channel::D1 : Channel::D2;
      for (double t = gap(drng); t < duration; t += gap(drng)) {
        const Picoseconds ps = to_picoseconds(t);
        if (ps <= out.live_time) out.tags.push_back({ps, ch});
      }
    }
  }

  auto order = [](const TimeTag& x, const TimeTag& y) {
    return x.time != y.time ? x.time < y.time : x.channel < y.channel;
  };
  std::sort(out.tags.begin(), out.tags.end(), order);
  out.tags.erase(std::unique(out.tags.begin(), out.tags.end()), out.tags.end());
  return out;
}

CoincidenceHistogram coincidence_histogram(const TimeTagStream& stream, double window, double bin_width) {
  if (!(bin_width > 0.0)) throw DomainError("coincidence_histogram: bin width must be > 0");
  if (!(window >= bin_width)) throw DomainError("coincidence_histogram: window must be at least one bin");
  const auto w = static_cast<std::int64_t>(to_picoseconds(bin_width));
  if (w < 1) throw DomainError("coincidence_histogram: bin width below 1 ps");
  const auto k_max = static_cast<std::int64_t>(to_picoseconds(window)) / w;

  std::vector<Picoseconds> t1, t2;
  for (const auto& t : stream.tags) (t.channel == Channel::D1 ? t1 : t2).push_back(t.time);
  if (t1.empty() || t2.empty()) throw EmptyStreamError("coincidence_histogram: a detector has no tags");
  if (stream.live_time == 0) throw EmptyStreamError("coincidence_histogram: zero live time");

  CoincidenceHistogram h;
  h.bin_width = to_seconds(static_cast<Picoseconds>(w));
  h.live_time = stream.live_time_seconds();
  h.r1 = static_cast<double>(t1.size()) / h.live_time;
  h.r2 = static_cast<double>(t2.size()) / h.live_time;
  h.counts.assign(static_cast<std::size_t>(2 * k_max + 1), 0);
  for (std::int64_t k = -k_max; k <= k_max; ++k) h.tau.push_back(static_cast<double>(k * w) / 1e12);

  // Bin k holds tau in [k w - w/2, k w + w/2); reach is the outer edge.
  const std::int64_t reach = k_max * w + w / 2 + 1;
  std::size_t first = 0;
  for (Picoseconds a : t1) {
    const auto ta = static_cast<std::int64_t>(a);
    while (first < t2.size() && static_cast<std::int64_t>(t2[first]) < ta - reach) ++first;
    for (std::size_t j = first; j < t2.size(); ++j) {
      const std::int64_t tau = ta - static_cast<std::int64_t>(t2[j]);
      if (tau < -reach) break;
      // floor((2 tau + w) / (2 w)) with integer floor division.
      const std::int64_t num = 2 * tau + w, den = 2 * w;
      std::int64_t k = num / den;
      if (num % den != 0 && num < 0) --k;
      if (k < -k_max || k > k_max) continue;
      ++h.counts[static_cast<std::size_t>(k + k_max)];
    }
  }
  return h;
}

correlate::CorrelationSeries normalize(const CoincidenceHistogram& hist, correlate::SeriesKind kind) {
  return correlate::normalize_histogram(hist.tau, hist.counts, hist.r1, hist.r2, hist.bin_width, hist.live_time, kind);
}

TelegraphTrace telegraph_signal(const ExperimentParams& params, double duration, std::uint64_t seed,
                                int initial_occupancy) {
  if (!(duration > 0.0)) throw DomainError("telegraph_signal: duration must be > 0");
  if (!(params.telegraph_bin > 0.0)) throw DomainError("telegraph_signal: bin width must be > 0");
  if (!(params.load_rate >= 0.0) || !(params.loss_rate >= 0.0))
    throw DomainError("telegraph_signal: load and loss rates must be >= 0");
  if (initial_occupancy != 0 && initial_occupancy != 1)
    throw DomainError("telegraph_signal: initial occupancy must be 0 or 1");

  TelegraphTrace tr;
  tr.bin_width = params.telegraph_bin;
  auto rng = make_rng(seed, 0, kPurposeTelegraph);

  // Occupancy path as dwells.
  int state = initial_occupancy;
  double t = 0.0;
  while (t < duration) {
    const double leave = state == 0 ? params.load_rate : params.loss_rate + params.load_rate;
    double dwell = std::numeric_limits<double>::infinity();
    if (leave > 0.0 && std::isfinite(leave)) dwell = std::exponential_distribution<double>(leave)(rng);
    if (std::isinf(leave)) dwell = 0.0;
    if (t + dwell >= duration) {
      tr.dwells.push_back({state, t, duration - t, false});
      break;
    }
    tr.dwells.push_back({state, t, dwell, true});
    if (state == 1 && std::generate_canonical<double, 64>(rng) * leave < params.load_rate) ++tr.collisional_losses;
    t += dwell;
    state = 1 - state;
  }

  const auto n_bins = static_cast<std::size_t>(std::ceil(duration / tr.bin_width - 1e-9));
  tr.occupied_fraction.assign(n_bins, 0.0);
  for (const auto& d : tr.dwells) {
    if (d.occupancy != 1) continue;
    const double a = d.start, b = d.start + d.duration;
    auto i = static_cast<std::size_t>(a / tr.bin_width);
    for (; i < n_bins; ++i) {
      const double lo = i * tr.bin_width, hi = std::min((i + 1) * tr.bin_width, duration);
      if (lo >= b) break;
      const double overlap = std::min(hi, b) - std::max(lo, a);
      if (overlap > 0.0) tr.occupied_fraction[i] += overlap / (hi - lo);
    }
  }

  auto crng = make_rng(seed, 0, kPurposeTelegraphCounts);
  tr.counts.reserve(n_bins);
  tr.occupancy.reserve(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    const double width = std::min((i + 1) * tr.bin_width, duration) - i * tr.bin_width;
    const double f = std::clamp(tr.occupied_fraction[i], 0.0, 1.0);
    tr.occupied_fraction[i] = f;
    const double mean = width * (params.background_rate + f * (params.atom_rate - params.background_rate));
    tr.counts.push_back(mean > 0.0 ? std::poisson_distribution<std::uint64_t>(mean)(crng) : 0);
    tr.occupancy.push_back(f >= 0.5 ? 1 : 0);
  }
  return tr;
}

std::vector<std::uint64_t> occupancy_histogram(const TelegraphTrace& trace) {
  std::uint64_t max_count = 0;
  for (auto c : trace.counts) max_count = std::max(max_count, c);
  std::vector<std::uint64_t> freq(trace.counts.empty() ? 0 : max_count + 1, 0);
  for (auto c : trace.counts) ++freq[c];
  return freq;
}

std::vector<Interval> threshold_gate(const TelegraphTrace& trace, double threshold, double background_rate,
                                     double atom_rate) {
  if (!(threshold > background_rate && threshold < atom_rate))
    throw DomainError("threshold_gate: threshold must lie between the background and atom rates");
  std::vector<Interval> out;
  bool open = false;
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    const double lo = i * trace.bin_width;
    const bool above = static_cast<double>(trace.counts[i]) / trace.bin_width > threshold;
    if (above && open) {
      out.back().end = lo + trace.bin_width;
    } else if (above) {
      out.push_back({lo, lo + trace.bin_width});
    }
    open = above;
  }
  return out;
}

TimeTagStream gate_stream(const TimeTagStream& stream, std::span<const Interval> intervals) {
  TimeTagStream out;
  Picoseconds offset = 0;
  auto it = stream.tags.begin();
  for (const auto& iv : intervals) {
    if (!(iv.end >= iv.start)) throw DataError("gate_stream: interval end before start");
    const Picoseconds a = to_picoseconds(iv.start), b = to_picoseconds(iv.end);
    if (a < offset) throw DataError("gate_stream: intervals overlap or are unsorted");
    it = std::lower_bound(it, stream.tags.end(), a, [](const TimeTag& t, Picoseconds v) { return t.time < v; });
    for (; it != stream.tags.end() && it->time < b; ++it) out.tags.push_back({it->time - a + out.live_time, it->channel});
    out.live_time += b - a;
    offset = b;
  }
  return out;
}

}  // namespace atomtrap::mc
