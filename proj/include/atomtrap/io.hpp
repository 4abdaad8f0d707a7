#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "atomtrap/correlate.hpp"
#include "atomtrap/montecarlo.hpp"
#include "atomtrap/params.hpp"
#include "atomtrap/spectrum.hpp"

namespace atomtrap::io {

// Everything a run can be configured with.
struct Config {
  ExperimentParams experiment;
  spectrum::InstrumentModel instrument;
  spectrum::DopplerModel doppler;
  correlate::DiffusionEnvelope envelope{0.24, 1.0 / 1.8e-6};
};

// INI-style text:
//
//   [laser]
//   delta_cl_mhz = -31        # comment
//   intensity_cl_mw_cm2 = 103 mW/cm^2
//
// Sections: laser, trap, detection, geometry, spectrum, envelope. Keys
// carry their unit as a suffix; an optional unit token after the value
// must agree with it. Frequencies given in MHz are stored as rad/s.
// Overrides use the same grammar as `section.key=value`. Throws
// ParseError (with line) on unknown keys, unit mismatches, missing
// required keys and out-of-range values.
Config parse_config(std::string_view text, const std::string& source = "<config>",
                    std::span<const std::string> overrides = {});
Config load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

// Names of all keys, as "section.key", for help output.
std::vector<std::string> config_keys();

// Shortest representation that parses back to the same double.
std::string format_double(double v);
// Whole-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);

// Binary time tags: ASCII header "#TTAG v1 live_time_ps=<n>\n", then
// 9-byte little-endian records (uint64 picoseconds, uint8 channel).
void write_timetags(const mc::TimeTagStream& stream, std::ostream& out);
void write_timetags(const mc::TimeTagStream& stream, const std::filesystem::path& path);

// Incremental reader for files too large to hold in memory. Validates
// order per record; errors name the 1-based record index.
class TimeTagReader {
 public:
  TimeTagReader(std::istream& in, std::string source);
  explicit TimeTagReader(const std::filesystem::path& path);

  mc::Picoseconds live_time() const { return live_time_; }
  // Next record, or nullopt at a clean end of file.
  std::optional<mc::TimeTag> next();
  // Appends up to max records to out; returns how many were read.
  std::size_t read(std::vector<mc::TimeTag>& out, std::size_t max);

 private:
  void read_header();

  std::ifstream file_;
  std::istream* in_;
  std::string source_;
  mc::Picoseconds live_time_ = 0;
  std::uint64_t index_ = 0;
  std::optional<mc::TimeTag> last_;
  mc::Picoseconds last_per_channel_[3] = {0, 0, 0};
  bool seen_[3] = {false, false, false};
};

mc::TimeTagStream read_timetags(std::istream& in, const std::string& source = "<timetags>");
mc::TimeTagStream read_timetags(const std::filesystem::path& path);

// Text forms. Every CSV starts with a "#kind=..." line, then the series
// metadata ('#' lines, verbatim), then the column header.
void write_timetags_csv(const mc::TimeTagStream& stream, std::ostream& out);
void write_series(const correlate::CorrelationSeries& s, std::ostream& out);
void write_series(const spectrum::SpectrumSeries& s, std::ostream& out);
// Columns bin_start_s, counts; the hidden occupancy is not stored.
void write_series(const mc::TelegraphTrace& t, std::ostream& out);

// Flat key=value block, order preserved.
struct FitReport {
  std::vector<std::pair<std::string, double>> entries;

  std::optional<double> get(std::string_view key) const;
  friend bool operator==(const FitReport&, const FitReport&) = default;
};

void write_report(const FitReport& r, std::ostream& out);

// frequency[n] = number of telegraph bins holding n counts.
struct OccupancyHistogram {
  std::vector<std::uint64_t> frequency;
  friend bool operator==(const OccupancyHistogram&, const OccupancyHistogram&) = default;
};

// Columns counts, bins.
void write_histogram(const OccupancyHistogram& h, std::ostream& out);

enum class DocumentKind {
  config,
  timetags,
  timetags_csv,
  correlation,
  spectrum,
  telegraph,
  occupancy_histogram,
  fit_report
};

std::string to_string(DocumentKind k);

struct ParsedDocument {
  DocumentKind kind = DocumentKind::config;
  std::string source;
  std::variant<Config, mc::TimeTagStream, correlate::CorrelationSeries, spectrum::SpectrumSeries, mc::TelegraphTrace,
               OccupancyHistogram, FitReport>
      payload;
};

// Sniffs the kind from the first bytes: "#TTAG" binary tags, "#kind=" CSV
// or report, anything else a config. Never crashes on arbitrary bytes;
// malformed input throws ParseError with the location.
ParsedDocument parse_document(std::string_view bytes, const std::string& source = "<input>");
ParsedDocument read_document(const std::filesystem::path& path);

// Typed readers; throw ParseError when the file holds another kind.
correlate::CorrelationSeries read_correlation(const std::filesystem::path& path);
spectrum::SpectrumSeries read_spectrum(const std::filesystem::path& path);
mc::TelegraphTrace read_telegraph(const std::filesystem::path& path);
FitReport read_report(const std::filesystem::path& path);

// Writes text to path, creating parent directories; throws DataError.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace atomtrap::io
