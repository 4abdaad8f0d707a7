#include "atomtrap/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "atomtrap/error.hpp"

namespace atomtrap::io {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  // A final newline does not open another line.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != ',') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Printable excerpt of untrusted input for error messages.
std::string excerpt(std::string_view s) {
  std::string out;
  for (char c : s.substr(0, 40)) out += (c >= 32 && c < 127) ? c : '?';
  if (s.size() > 40) out += "...";
  return out;
}

// ---------------------------------------------------------------------------
// Config

struct Location {
  std::string source;
  std::size_t line = 0;
};

struct Entry {
  std::string value;  // everything after '=', comment stripped
  Location where;
};

enum class Unit { none, mw_cm2, mhz, mhz_per_mk, mk, mw, um, nm, hz, cps, s, uk, us, text, vector3, count };

struct KeySpec {
  const char* section;
  const char* name;
  Unit unit;
  std::function<void(Config&, double)> set;
  std::function<void(Config&, const std::string&)> set_text;
};

std::vector<std::string_view> unit_spellings(Unit u) {
  switch (u) {
    case Unit::mw_cm2: return {"mW/cm2", "mW/cm^2", "mW/cm\xc2\xb2"};
    case Unit::mhz: return {"MHz"};
    case Unit::mhz_per_mk: return {"MHz/mK"};
    case Unit::mk: return {"mK"};
    case Unit::mw: return {"mW"};
    case Unit::um: return {"um", "\xc2\xb5m", "\xce\xbcm"};
    case Unit::nm: return {"nm"};
    case Unit::hz: return {"Hz", "1/s", "s^-1", "/s"};
    case Unit::cps: return {"cps", "1/s", "s^-1", "/s"};
    case Unit::s: return {"s"};
    case Unit::uk: return {"uK", "\xc2\xb5K", "\xce\xbcK"};
    case Unit::us: return {"us", "\xc2\xb5s", "\xce\xbcs"};
    default: return {};
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    auto num = [&](const char* sec, const char* name, Unit u, std::function<void(Config&, double)> f) {
      t.push_back({sec, name, u, std::move(f), {}});
    };
    auto nonneg = [](double v, const char* what) { require(v >= 0.0, std::string(what) + " must be >= 0"); };
    auto positive = [](double v, const char* what) { require(v > 0.0, std::string(what) + " must be > 0"); };

    num("laser", "intensity_cl_mw_cm2", Unit::mw_cm2, [=](Config& c, double v) {
      nonneg(v, "intensity");
      c.experiment.intensity_cool = v;
    });
    num("laser", "intensity_rl_mw_cm2", Unit::mw_cm2, [=](Config& c, double v) {
      nonneg(v, "intensity");
      c.experiment.intensity_repump = v;
    });
    num("laser", "saturation_intensity_mw_cm2", Unit::mw_cm2, [=](Config& c, double v) {
      positive(v, "saturation intensity");
      c.experiment.saturation_intensity = v;
    });
    num("laser", "line_strength_rl", Unit::none, [=](Config& c, double v) {
      nonneg(v, "line strength");
      c.experiment.line_strength_repump = v;
    });
    num("laser", "line_strength_cl_f2", Unit::none, [=](Config& c, double v) {
      nonneg(v, "line strength");
      c.experiment.line_strength_cool_f2 = v;
    });
    num("laser", "line_strength_cl_f3", Unit::none, [=](Config& c, double v) {
      nonneg(v, "line strength");
      c.experiment.line_strength_cool_f3 = v;
    });
    num("laser", "delta_rl_mhz", Unit::mhz, [](Config& c, double v) { c.experiment.delta_repump = mhz_to_angular(v); });
    num("laser", "delta_cl_mhz", Unit::mhz, [](Config& c, double v) { c.experiment.delta_cool = mhz_to_angular(v); });
    num("laser", "stark_coefficient_mhz_per_mk", Unit::mhz_per_mk,
        [](Config& c, double v) { c.experiment.stark_coefficient = mhz_to_angular(v); });
    num("laser", "excited_hfs_mhz", Unit::mhz, [](Config& c, double v) { c.experiment.excited_hfs = mhz_to_angular(v); });
    // omega1..3 are applied after the intensities; see build_config().
    num("laser", "omega1_mhz", Unit::mhz, [](Config&, double) {});
    num("laser", "omega2_mhz", Unit::mhz, [](Config&, double) {});
    num("laser", "omega3_mhz", Unit::mhz, [](Config&, double) {});

    num("trap", "depth_mk", Unit::mk, [=](Config& c, double v) {
      nonneg(v, "trap depth");
      c.experiment.trap_depth_mk = v;
    });
    num("trap", "power_mw", Unit::mw, [=](Config& c, double v) {
      nonneg(v, "trap power");
      c.experiment.trap_power = v * 1e-3;
    });
    num("trap", "waist_um", Unit::um, [=](Config& c, double v) {
      positive(v, "trap waist");
      c.experiment.trap_waist = v * 1e-6;
    });
    num("trap", "wavelength_nm", Unit::nm, [=](Config& c, double v) {
      positive(v, "trap wavelength");
      c.experiment.trap_wavelength = v * 1e-9;
    });
    num("trap", "load_rate_hz", Unit::hz, [=](Config& c, double v) {
      nonneg(v, "load rate");
      c.experiment.load_rate = v;
    });
    num("trap", "loss_rate_hz", Unit::hz, [=](Config& c, double v) {
      nonneg(v, "loss rate");
      c.experiment.loss_rate = v;
    });
    num("trap", "hyperfine_flip_rate_hz", Unit::hz, [=](Config& c, double v) {
      nonneg(v, "hyperfine flip rate");
      c.experiment.hyperfine_flip_rate = v;
    });

    num("detection", "background_rate_cps", Unit::cps, [=](Config& c, double v) {
      nonneg(v, "background rate");
      c.experiment.background_rate = v;
    });
    num("detection", "atom_rate_cps", Unit::cps, [=](Config& c, double v) {
      nonneg(v, "atom rate");
      c.experiment.atom_rate = v;
    });
    num("detection", "dark_rate_cps", Unit::cps, [=](Config& c, double v) {
      nonneg(v, "dark rate");
      c.experiment.dark_rate_per_detector = v;
    });
    num("detection", "detection_efficiency", Unit::none, [](Config& c, double v) {
      require(v >= 0.0 && v <= 1.0, "detection efficiency must lie in [0, 1]");
      c.experiment.detection_efficiency = v;
    });
    num("detection", "gate_threshold_cps", Unit::cps, [=](Config& c, double v) {
      nonneg(v, "gate threshold");
      c.experiment.gate_threshold = v;
    });
    num("detection", "telegraph_bin_s", Unit::s, [=](Config& c, double v) {
      positive(v, "telegraph bin");
      c.experiment.telegraph_bin = v;
    });

    num("spectrum", "fpi_fwhm_mhz", Unit::mhz, [=](Config& c, double v) {
      positive(v, "fpi_fwhm");
      c.instrument.fpi_fwhm = v;
    });
    num("spectrum", "finesse", Unit::none, [](Config& c, double v) {
      require(v > 1.0, "finesse must be > 1");
      c.instrument.finesse = v;
    });
    num("spectrum", "peak_transmission", Unit::none, [](Config& c, double v) {
      require(v > 0.0 && v <= 1.0, "peak transmission must lie in (0, 1]");
      c.instrument.peak_transmission = v;
    });
    num("spectrum", "laser_fwhm_mhz", Unit::mhz, [=](Config& c, double v) {
      nonneg(v, "laser_fwhm");
      c.instrument.laser_fwhm = v;
    });
    t.push_back({"spectrum", "laser_lineshape", Unit::text, {}, [](Config& c, const std::string& v) {
                   c.instrument.laser_lineshape = spectrum::lineshape_from_string(v);
                 }});
    t.push_back({"spectrum", "doppler_kernel", Unit::text, {}, [](Config& c, const std::string& v) {
                   c.doppler.kernel = spectrum::doppler_kernel_from_string(v);
                 }});
    num("spectrum", "temperature_uk", Unit::uk, [=](Config& c, double v) {
      nonneg(v, "temperature");
      c.doppler.temperature = v * 1e-6;
    });
    num("spectrum", "fluorescence_wavelength_nm", Unit::nm, [=](Config& c, double v) {
      positive(v, "fluorescence wavelength");
      c.doppler.wavelength = v * 1e-9;
    });

    num("envelope", "amplitude", Unit::none, [=](Config& c, double v) {
      nonneg(v, "envelope amplitude");
      c.envelope.amplitude = v;
    });
    num("envelope", "time_constant_us", Unit::us, [=](Config& c, double v) {
      positive(v, "envelope time constant");
      c.envelope.rate = 1.0 / (v * 1e-6);
    });

    t.push_back({"geometry", "beams", Unit::count, {}, {}});
    t.push_back({"geometry", "detection_axis", Unit::vector3, {}, {}});
    return t;
  }();
  return table;
}

const KeySpec* find_key(std::string_view section, std::string_view name) {
  for (const auto& k : key_table())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

double parse_value(const Entry& e, Unit unit) {
  const auto tok = tokens(e.value);
  if (tok.empty()) throw ParseError(e.where.source, e.where.line, "missing value");
  const auto v = parse_double(tok[0]);
  if (!v || !std::isfinite(*v))
    throw ParseError(e.where.source, e.where.line, "not a number: '" + excerpt(tok[0]) + "'");
  if (tok.size() > 2) throw ParseError(e.where.source, e.where.line, "unexpected text after value");
  if (tok.size() == 2) {
    const auto spellings = unit_spellings(unit);
    if (std::find(spellings.begin(), spellings.end(), tok[1]) == spellings.end())
      throw ParseError(e.where.source, e.where.line,
                       "unit '" + excerpt(tok[1]) + "' does not match the key's unit" +
                           (spellings.empty() ? std::string(" (dimensionless)") : " (" + std::string(spellings[0]) + ")"));
  }
  return *v;
}

Eigen::Vector3d parse_vector(const Entry& e) {
  const auto tok = tokens(e.value);
  if (tok.size() != 3) throw ParseError(e.where.source, e.where.line, "expected three components");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    const auto x = parse_double(tok[static_cast<std::size_t>(i)]);
    if (!x || !std::isfinite(*x))
      throw ParseError(e.where.source, e.where.line, "not a number: '" + excerpt(tok[static_cast<std::size_t>(i)]) + "'");
    v[i] = *x;
  }
  if (!(v.norm() > 0.0)) throw ParseError(e.where.source, e.where.line, "zero vector");
  return v.normalized();
}

using EntryMap = std::map<std::pair<std::string, std::string>, Entry>;

void check_key(const std::string& section, const std::string& key, const Location& where) {
  if (find_key(section, key)) return;
  if (section == "geometry" && key.rfind("beam", 0) == 0) {
    const auto us = key.find('_');
    if (us != std::string::npos) {
      const auto idx = parse_int<unsigned>(std::string_view(key).substr(4, us - 4));
      const auto field = key.substr(us + 1);
      if (idx && *idx >= 1 && (field == "direction" || field == "weight")) return;
    }
  }
  throw ParseError(where.source, where.line, "unknown key '" + excerpt(key) + "' in section [" + excerpt(section) + "]");
}

void parse_text(std::string_view text, const std::string& source, EntryMap& entries,
                std::map<std::string, Location>& sections) {
  std::string section;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Location where{source, i + 1};
    std::string_view line = lines[i];
    const auto hash = line.find_first_of("#;");
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, where.line, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      static const std::array<std::string_view, 6> known{"laser", "trap", "detection", "geometry", "spectrum",
                                                         "envelope"};
      if (std::find(known.begin(), known.end(), section) == known.end())
        throw ParseError(source, where.line, "unknown section [" + excerpt(section) + "]");
      sections.emplace(section, where);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, where.line, "expected 'key = value'");
    if (section.empty()) throw ParseError(source, where.line, "key outside of any [section]");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(source, where.line, "empty key");
    check_key(section, key, where);
    const auto [it, inserted] = entries.try_emplace({section, key}, Entry{std::string(trim(line.substr(eq + 1))), where});
    if (!inserted) throw ParseError(source, where.line, "duplicate key '" + key + "'");
  }
}

void apply_override(const std::string& text, std::size_t n, EntryMap& entries,
                    std::map<std::string, Location>& sections) {
  const Location where{"<override " + std::to_string(n) + ">", 1};
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ParseError(where.source, 1, "override must be key=value");
  std::string key(trim(std::string_view(text).substr(0, eq)));
  std::string value(trim(std::string_view(text).substr(eq + 1)));
  std::string section;
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    section = key.substr(0, dot);
    key = key.substr(dot + 1);
  } else {
    for (const auto& k : key_table())
      if (key == k.name) section = k.section;
    if (section.empty()) throw ParseError(where.source, 1, "unknown key '" + excerpt(key) + "'");
  }
  check_key(section, key, where);
  entries[{section, key}] = Entry{value, where};
  sections.emplace(section, where);
}

void build_geometry(Config& cfg, const EntryMap& entries, const std::map<std::string, Location>& sections) {
  bool any = false;
  for (const auto& [k, e] : entries)
    if (k.first == "geometry") any = true;
  if (!any) return;
  const Location sec = sections.count("geometry") ? sections.at("geometry") : Location{};
  auto get = [&](const std::string& key) -> const Entry& {
    const auto it = entries.find({"geometry", key});
    if (it == entries.end()) throw ParseError(sec.source, sec.line, "missing required key geometry." + key);
    return it->second;
  };
  const Entry& n_entry = get("beams");
  const auto n = parse_int<unsigned>(trim(n_entry.value));
  if (!n || *n < 1 || *n > 64) throw ParseError(n_entry.where.source, n_entry.where.line, "beams must be 1..64");
  BeamGeometry g;
  g.detection_axis = cfg.experiment.beam_geometry.detection_axis;
  if (const auto it = entries.find({"geometry", "detection_axis"}); it != entries.end())
    g.detection_axis = parse_vector(it->second);
  for (unsigned i = 1; i <= *n; ++i) {
    const auto dir = parse_vector(get("beam" + std::to_string(i) + "_direction"));
    const Entry& we = get("beam" + std::to_string(i) + "_weight");
    const double w = parse_value(we, Unit::none);
    if (!(w >= 0.0)) throw ParseError(we.where.source, we.where.line, "beam weight must be >= 0");
    g.beams.push_back({dir, w});
  }
  for (const auto& [k, e] : entries) {
    if (k.first != "geometry" || k.second.rfind("beam", 0) != 0 || k.second == "beams") continue;
    const auto idx = parse_int<unsigned>(std::string_view(k.second).substr(4, k.second.find('_') - 4));
    if (!idx || *idx > *n)
      throw ParseError(e.where.source, e.where.line, "key '" + k.second + "' beyond the declared beam count");
  }
  double sum = 0.0;
  for (const auto& b : g.beams) sum += b.weight;
  if (!(sum > 0.0)) throw ParseError(n_entry.where.source, n_entry.where.line, "beam weights sum to zero");
  // Weights are relative; normalize so they sum to one.
  for (auto& b : g.beams) b.weight /= sum;
  cfg.experiment.beam_geometry = g;
  cfg.doppler.geometry = g;
}

Config build_config(const EntryMap& entries, const std::map<std::string, Location>& sections) {
  Config cfg;
  std::optional<double> omega[3];
  for (const auto& [k, e] : entries) {
    if (k.first == "geometry") continue;
    const KeySpec* spec = find_key(k.first, k.second);
    try {
      if (spec->unit == Unit::text) {
        const auto tok = tokens(e.value);
        if (tok.size() != 1) throw ParseError(e.where.source, e.where.line, "expected a single word");
        spec->set_text(cfg, std::string(tok[0]));
      } else {
        const double v = parse_value(e, spec->unit);
        spec->set(cfg, v);
        if (k.second.rfind("omega", 0) == 0) {
          require(v >= 0.0, "Rabi frequency must be >= 0");
          omega[k.second[5] - '1'] = mhz_to_angular(v);
        }
      }
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& err) {
      throw ParseError(e.where.source, e.where.line, k.first + "." + k.second + ": " + err.what());
    }
  }
  build_geometry(cfg, entries, sections);
  cfg.experiment.update_rabi_from_intensities();
  if (omega[0]) cfg.experiment.omega1 = *omega[0];
  if (omega[1]) cfg.experiment.omega2 = *omega[1];
  if (omega[2]) cfg.experiment.omega3 = *omega[2];
  cfg.doppler.geometry = cfg.experiment.beam_geometry;
  return cfg;
}

// ---------------------------------------------------------------------------
// CSV

void put_le64(char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}
std::uint64_t get_le64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

struct KindLine {
  std::string kind;
  std::map<std::string, std::string> attrs;
};

KindLine parse_kind_line(std::string_view line, const std::string& source) {
  KindLine k;
  const auto tok = tokens(line.substr(1));
  for (std::size_t i = 0; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string_view::npos) throw ParseError(source, 1, "malformed kind line");
    std::string key(tok[i].substr(0, eq)), val(tok[i].substr(eq + 1));
    if (i == 0) {
      if (key != "kind") throw ParseError(source, 1, "first line must start with #kind=");
      k.kind = val;
    } else {
      k.attrs[key] = val;
    }
  }
  return k;
}

void write_metadata(const std::vector<std::string>& metadata, std::ostream& out) {
  for (const auto& m : metadata) {
    if (m.find_first_of("\r\n") != std::string::npos) throw DataError("metadata line contains a newline");
    out << '#' << m << '\n';
  }
}

// Rows of a CSV body after the kind line: metadata, header, numeric rows.
struct Table {
  std::vector<std::string> metadata;
  std::vector<std::vector<double>> columns;
  std::vector<std::size_t> row_lines;
};

Table parse_table(const std::vector<std::string_view>& lines, const std::string& source,
                  std::span<const std::string_view> header) {
  Table t;
  std::size_t i = 1;
  for (; i < lines.size() && !lines[i].empty() && lines[i].front() == '#'; ++i)
    t.metadata.emplace_back(lines[i].substr(1));
  if (i >= lines.size()) throw ParseError(source, i + 1, "missing column header");
  const auto cols = split(lines[i], ',');
  if (cols.size() != header.size()) throw ParseError(source, i + 1, "column count mismatch in header");
  for (std::size_t c = 0; c < cols.size(); ++c)
    if (trim(cols[c]) != header[c])
      throw ParseError(source, i + 1, "unexpected column '" + excerpt(cols[c]) + "'");
  t.columns.assign(header.size(), {});
  for (++i; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cells = split(lines[i], ',');
    if (cells.size() != header.size())
      throw ParseError(source, i + 1,
                       "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_double(trim(cells[c]));
      if (!v)
        throw ParseError(source, i + 1,
                         "non-numeric cell '" + excerpt(cells[c]) + "' in column " + std::to_string(c + 1));
      t.columns[c].push_back(*v);
    }
    t.row_lines.push_back(i + 1);
  }
  return t;
}

constexpr std::array<std::string_view, 3> kCorrelationHeader{"tau_s", "g2", "sigma"};
constexpr std::array<std::string_view, 3> kSpectrumHeader{"detuning_mhz", "value", "sigma"};
constexpr std::array<std::string_view, 2> kTelegraphHeader{"bin_start_s", "counts"};
constexpr std::array<std::string_view, 2> kHistogramHeader{"counts", "bins"};
constexpr std::array<std::string_view, 2> kTimetagHeader{"time_ps", "channel"};

std::string attr(const KindLine& k, const std::string& key, const std::string& source) {
  const auto it = k.attrs.find(key);
  if (it == k.attrs.end()) throw ParseError(source, 1, "kind line lacks " + key + "=");
  return it->second;
}

// Wraps module validation errors with a location.
template <typename F>
void validated(const std::string& source, F&& f) {
  try {
    f();
  } catch (const ParseError&) {
    throw;
  } catch (const DataError& e) {
    throw ParseError(source, 0, e.what());
  }
}

ParsedDocument parse_csv(std::string_view bytes, const std::string& source) {
  const auto lines = split_lines(bytes);
  const KindLine k = parse_kind_line(lines.front(), source);
  ParsedDocument doc;
  doc.source = source;
  if (k.kind == "correlation") {
    doc.kind = DocumentKind::correlation;
    correlate::CorrelationSeries s;
    validated(source, [&] { s.kind = correlate::series_kind_from_string(attr(k, "series", source)); });
    auto t = parse_table(lines, source, kCorrelationHeader);
    s.metadata = std::move(t.metadata);
    s.tau = std::move(t.columns[0]);
    s.g2 = std::move(t.columns[1]);
    s.sigma = std::move(t.columns[2]);
    validated(source, [&] { s.validate(); });
    doc.payload = std::move(s);
  } else if (k.kind == "spectrum") {
    doc.kind = DocumentKind::spectrum;
    spectrum::SpectrumSeries s;
    auto t = parse_table(lines, source, kSpectrumHeader);
    s.metadata = std::move(t.metadata);
    s.detuning = std::move(t.columns[0]);
    s.value = std::move(t.columns[1]);
    s.sigma = std::move(t.columns[2]);
    validated(source, [&] { s.validate(); });
    doc.payload = std::move(s);
  } else if (k.kind == "telegraph") {
    doc.kind = DocumentKind::telegraph;
    mc::TelegraphTrace tr;
    const auto bw = parse_double(attr(k, "bin_width_s", source));
    if (!bw || !(*bw > 0.0) || !std::isfinite(*bw)) throw ParseError(source, 1, "bin_width_s must be > 0");
    tr.bin_width = *bw;
    auto t = parse_table(lines, source, kTelegraphHeader);
    for (std::size_t i = 0; i < t.columns[0].size(); ++i) {
      const double start = t.columns[0][i], c = t.columns[1][i];
      if (std::abs(start - static_cast<double>(i) * tr.bin_width) > 1e-9 * std::max(1.0, start))
        throw ParseError(source, t.row_lines[i], "bin start does not match the bin width");
      if (!(c >= 0.0) || c != std::floor(c) || c > 1.8e19)
        throw ParseError(source, t.row_lines[i], "counts must be a non-negative integer");
      tr.counts.push_back(static_cast<std::uint64_t>(c));
    }
    doc.payload = std::move(tr);
  } else if (k.kind == "timetags") {
    doc.kind = DocumentKind::timetags_csv;
    mc::TimeTagStream s;
    const auto lt = parse_int<std::uint64_t>(attr(k, "live_time_ps", source));
    if (!lt) throw ParseError(source, 1, "bad live_time_ps");
    s.live_time = *lt;
    std::size_t i = 1;
    if (i >= lines.size() || trim(lines[i]) != "time_ps,channel") throw ParseError(source, 2, "missing column header");
    for (++i; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      const auto cells = split(lines[i], ',');
      if (cells.size() != kTimetagHeader.size()) throw ParseError(source, i + 1, "expected 2 columns");
      const auto t = parse_int<std::uint64_t>(trim(cells[0]));
      const auto c = parse_int<unsigned>(trim(cells[1]));
      if (!t || !c || (*c != 1 && *c != 2)) throw ParseError(source, i + 1, "malformed time tag row");
      s.tags.push_back({*t, static_cast<mc::Channel>(*c)});
    }
    validated(source, [&] { s.validate(); });
    doc.payload = std::move(s);
  } else if (k.kind == "occupancy-histogram") {
    doc.kind = DocumentKind::occupancy_histogram;
    OccupancyHistogram h;
    auto t = parse_table(lines, source, kHistogramHeader);
    for (std::size_t i = 0; i < t.columns[0].size(); ++i) {
      const double n = t.columns[0][i], f = t.columns[1][i];
      if (n != static_cast<double>(i)) throw ParseError(source, t.row_lines[i], "counts column must run 0, 1, 2, ...");
      if (!(f >= 0.0) || f != std::floor(f) || f > 1.8e19)
        throw ParseError(source, t.row_lines[i], "bins must be a non-negative integer");
      h.frequency.push_back(static_cast<std::uint64_t>(f));
    }
    doc.payload = std::move(h);
  } else if (k.kind == "fit-report") {
    doc.kind = DocumentKind::fit_report;
    FitReport r;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos || eq == 0) throw ParseError(source, i + 1, "expected key=value");
      const auto v = parse_double(trim(line.substr(eq + 1)));
      if (!v) throw ParseError(source, i + 1, "non-numeric value for '" + excerpt(line.substr(0, eq)) + "'");
      r.entries.emplace_back(std::string(trim(line.substr(0, eq))), *v);
    }
    doc.payload = std::move(r);
  } else {
    throw ParseError(source, 1, "unknown document kind '" + excerpt(k.kind) + "'");
  }
  return doc;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty() || s.front() == '+' || s.front() == ' ') return std::nullopt;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

Config parse_config(std::string_view text, const std::string& source, std::span<const std::string> overrides) {
  EntryMap entries;
  std::map<std::string, Location> sections;
  parse_text(text, source, entries, sections);
  for (std::size_t i = 0; i < overrides.size(); ++i) apply_override(overrides[i], i + 1, entries, sections);
  Config cfg = build_config(entries, sections);
  validated(source, [&] {
    cfg.experiment.validate();
    cfg.instrument.validate();
    cfg.doppler.validate();
    cfg.envelope.validate();
  });
  return cfg;
}

Config load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  return parse_config(read_text_file(path), path.string(), overrides);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(std::string(k.section) + "." + k.name);
  out.push_back("geometry.beamN_direction");
  out.push_back("geometry.beamN_weight");
  return out;
}

// ---------------------------------------------------------------------------
// Time tags

void write_timetags(const mc::TimeTagStream& stream, std::ostream& out) {
  stream.validate();
  out << "#TTAG v1 live_time_ps=" << stream.live_time << '\n';
  std::vector<char> buf;
  buf.reserve(9 * 4096);
  for (std::size_t i = 0; i < stream.tags.size(); ++i) {
    char rec[9];
    put_le64(rec, stream.tags[i].time);
    rec[8] = static_cast<char>(stream.tags[i].channel);
    buf.insert(buf.end(), rec, rec + 9);
    if (buf.size() >= 9 * 4096) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write_timetags: write failed");
}

void write_timetags(const mc::TimeTagStream& stream, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  write_timetags(stream, f);
}

TimeTagReader::TimeTagReader(std::istream& in, std::string source) : in_(&in), source_(std::move(source)) {
  read_header();
}

TimeTagReader::TimeTagReader(const std::filesystem::path& path)
    : file_(path, std::ios::binary), in_(&file_), source_(path.string()) {
  if (!file_) throw ParseError(source_, 0, "cannot open file");
  read_header();
}

void TimeTagReader::read_header() {
  std::string line;
  char c;
  while (line.size() < 128 && in_->get(c) && c != '\n') line += c;
  constexpr std::string_view magic = "#TTAG v1 live_time_ps=";
  if (line.rfind(magic, 0) != 0 || c != '\n') throw ParseError(source_, 0, "bad magic (expected '#TTAG v1')");
  const auto lt = parse_int<std::uint64_t>(std::string_view(line).substr(magic.size()));
  if (!lt) throw ParseError(source_, 0, "bad live_time_ps in header");
  live_time_ = *lt;
}

std::optional<mc::TimeTag> TimeTagReader::next() {
  unsigned char rec[9];
  in_->read(reinterpret_cast<char*>(rec), 9);
  const auto got = in_->gcount();
  if (got == 0) return std::nullopt;
  ++index_;
  if (got != 9) throw ParseError(source_, index_, "truncated record");
  const mc::TimeTag tag{get_le64(rec), static_cast<mc::Channel>(rec[8])};
  const unsigned ch = rec[8];
  if (ch != 1 && ch != 2) throw ParseError(source_, index_, "invalid channel " + std::to_string(ch));
  if ((last_ && tag.time < last_->time) || (seen_[ch] && tag.time <= last_per_channel_[ch]))
    throw ParseError(source_, index_, "non-monotonic timestamp");
  if (tag.time > live_time_) throw ParseError(source_, index_, "timestamp beyond live time");
  last_ = tag;
  seen_[ch] = true;
  last_per_channel_[ch] = tag.time;
  return tag;
}

std::size_t TimeTagReader::read(std::vector<mc::TimeTag>& out, std::size_t max) {
  std::size_t n = 0;
  for (; n < max; ++n) {
    auto t = next();
    if (!t) break;
    out.push_back(*t);
  }
  return n;
}

mc::TimeTagStream read_timetags(std::istream& in, const std::string& source) {
  TimeTagReader r(in, source);
  mc::TimeTagStream s;
  s.live_time = r.live_time();
  while (r.read(s.tags, 1u << 16) > 0) {
  }
  return s;
}

mc::TimeTagStream read_timetags(const std::filesystem::path& path) {
  TimeTagReader r(path);
  mc::TimeTagStream s;
  s.live_time = r.live_time();
  while (r.read(s.tags, 1u << 16) > 0) {
  }
  return s;
}

// ---------------------------------------------------------------------------
// CSV writers

void write_timetags_csv(const mc::TimeTagStream& stream, std::ostream& out) {
  stream.validate();
  out << "#kind=timetags live_time_ps=" << stream.live_time << '\n' << "time_ps,channel\n";
  for (const auto& t : stream.tags) out << t.time << ',' << static_cast<unsigned>(t.channel) << '\n';
}

void write_series(const correlate::CorrelationSeries& s, std::ostream& out) {
  s.validate();
  out << "#kind=correlation series=" << correlate::to_string(s.kind) << '\n';
  write_metadata(s.metadata, out);
  out << "tau_s,g2,sigma\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << format_double(s.tau[i]) << ',' << format_double(s.g2[i]) << ',' << format_double(s.sigma[i]) << '\n';
}

void write_series(const spectrum::SpectrumSeries& s, std::ostream& out) {
  s.validate();
  out << "#kind=spectrum\n";
  write_metadata(s.metadata, out);
  out << "detuning_mhz,value,sigma\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << format_double(s.detuning[i]) << ',' << format_double(s.value[i]) << ',' << format_double(s.sigma[i])
        << '\n';
}

void write_series(const mc::TelegraphTrace& t, std::ostream& out) {
  out << "#kind=telegraph bin_width_s=" << format_double(t.bin_width) << '\n' << "bin_start_s,counts\n";
  for (std::size_t i = 0; i < t.counts.size(); ++i)
    out << format_double(static_cast<double>(i) * t.bin_width) << ',' << t.counts[i] << '\n';
}

void write_histogram(const OccupancyHistogram& h, std::ostream& out) {
  out << "#kind=occupancy-histogram\n" << "counts,bins\n";
  for (std::size_t i = 0; i < h.frequency.size(); ++i) out << i << ',' << h.frequency[i] << '\n';
}

std::optional<double> FitReport::get(std::string_view key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return std::nullopt;
}

void write_report(const FitReport& r, std::ostream& out) {
  out << "#kind=fit-report\n";
  for (const auto& [k, v] : r.entries) {
    if (k.empty() || k.find_first_of("=\r\n") != std::string::npos) throw DataError("fit report: bad key");
    out << k << '=' << format_double(v) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Documents

std::string to_string(DocumentKind k) {
  switch (k) {
    case DocumentKind::config: return "config";
    case DocumentKind::timetags: return "timetags";
    case DocumentKind::timetags_csv: return "timetags-csv";
    case DocumentKind::correlation: return "correlation";
    case DocumentKind::spectrum: return "spectrum";
    case DocumentKind::telegraph: return "telegraph";
    case DocumentKind::occupancy_histogram: return "occupancy-histogram";
    case DocumentKind::fit_report: return "fit-report";
  }
  return "config";
}

ParsedDocument parse_document(std::string_view bytes, const std::string& source) {
  if (bytes.rfind("#TTAG", 0) == 0) {
    std::istringstream in{std::string(bytes)};
    ParsedDocument doc;
    doc.kind = DocumentKind::timetags;
    doc.source = source;
    doc.payload = read_timetags(in, source);
    return doc;
  }
  if (bytes.rfind("#kind=", 0) == 0) return parse_csv(bytes, source);
  ParsedDocument doc;
  doc.kind = DocumentKind::config;
  doc.source = source;
  doc.payload = parse_config(bytes, source);
  return doc;
}

ParsedDocument read_document(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  return parse_document(bytes, path.string());
}

namespace {

template <typename T>
T read_typed(const std::filesystem::path& path, DocumentKind want) {
  auto doc = read_document(path);
  if (doc.kind != want)
    throw ParseError(path.string(), 0, "expected a " + to_string(want) + " file, found " + to_string(doc.kind));
  return std::get<T>(std::move(doc.payload));
}

}  // namespace

correlate::CorrelationSeries read_correlation(const std::filesystem::path& path) {
  return read_typed<correlate::CorrelationSeries>(path, DocumentKind::correlation);
}
spectrum::SpectrumSeries read_spectrum(const std::filesystem::path& path) {
  return read_typed<spectrum::SpectrumSeries>(path, DocumentKind::spectrum);
}
mc::TelegraphTrace read_telegraph(const std::filesystem::path& path) {
  return read_typed<mc::TelegraphTrace>(path, DocumentKind::telegraph);
}
FitReport read_report(const std::filesystem::path& path) {
  return read_typed<FitReport>(path, DocumentKind::fit_report);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw DataError("write to '" + path.string() + "' failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace atomtrap::io
