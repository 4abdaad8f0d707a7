#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "atomtrap/cli.hpp"
#include "atomtrap/io.hpp"

using namespace atomtrap;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "atomtrap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("atomtrap_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  std::string str() const { return path.string(); }
};

// key=value lines of a summary or report.
std::optional<double> value_of(const std::string& text, const std::string& key) {
  return std::get<io::FitReport>(io::parse_document("#kind=fit-report\n" + text).payload).get(key);
}

struct EnvGuard {
  explicit EnvGuard(const std::string& value) { ::setenv("ATOMTRAP_CONFIG", value.c_str(), 1); }
  ~EnvGuard() { ::unsetenv("ATOMTRAP_CONFIG"); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"g2", "--tau-max"}).code == cli::kUsage);
    CHECK(run({"spectrum", "--mode", "guess"}).code == cli::kUsage);
    CHECK(run({"--quiet", "--verbose", "trap"}).code == cli::kUsage);
    CHECK(run({"--workers", "0", "trap"}).code == cli::kUsage);
    const auto help = run({"--help"});
    CHECK(help.code == cli::kOk);
    CHECK(help.out.find("telegraph") != std::string::npos);
  }

  TEST_CASE("trap report with defaults") {
    TempDir d;
    const auto r = run({"--out", d.str(), "trap"});
    REQUIRE(r.code == 0);
    CHECK(*value_of(r.out, "trap_depth_mk") == doctest::Approx(1.0).epsilon(0.05));
    CHECK(*value_of(r.out, "scattering_rate_hz") == doctest::Approx(24.0).epsilon(0.1));
    CHECK(*value_of(r.out, "effective_rabi_mhz") == doctest::Approx(47.5).epsilon(0.01));
    const auto rep = io::read_report(d / "trap_report.txt");
    CHECK(rep.get("trap_depth_mk") == value_of(r.out, "trap_depth_mk"));
  }

  TEST_CASE("trap: zero power and blue wavelength") {
    TempDir d;
    const auto zero = run({"--out", d.str(), "--override", "trap.power_mw=0", "trap"});
    REQUIRE(zero.code == 0);
    CHECK(*value_of(zero.out, "trap_depth_mk") == 0.0);
    CHECK(*value_of(zero.out, "scattering_rate_hz") == 0.0);
    const auto blue = run({"--out", d.str(), "--override", "trap.wavelength_nm=780", "trap"});
    CHECK(blue.code == cli::kDataError);
    CHECK(blue.err.find("red-detuned") != std::string::npos);
    CHECK(run({"--out", d.str(), "--override", "trap.wavelength_nm=700", "trap"}).code == cli::kDataError);
  }

  TEST_CASE("g2 writes both files") {
    TempDir d;
    const auto r = run({"--out", d.str(), "g2", "--tau-max", "100e-9", "--tau-step", "0.5e-9"});
    REQUIRE(r.code == 0);
    const auto g2 = io::read_correlation(d / "g2.csv");
    const auto env = io::read_correlation(d / "g2_envelope.csv");
    CHECK(g2.size() == 401);
    CHECK(env.size() == 401);
    CHECK(g2.g2[200] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*value_of(r.out, "g2_max") > 2.0);
    CHECK(*value_of(r.out, "first_oscillation_mhz") == doctest::Approx(47.5).epsilon(0.05));
    // The envelope only matters at nonzero delay.
    CHECK(env.g2[200] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(env.g2[300] != g2.g2[300]);
  }

  TEST_CASE("g2 at the deeper trap") {
    TempDir d;
    const auto r = run({"--out", d.str(), "--quiet", "--override", "trap.depth_mk=0.81", "g2"});
    REQUIRE(r.code == 0);
    CHECK(r.out.empty());
    CHECK(io::read_correlation(d / "g2.csv").metadata[0] == " trap_depth_mk=0.81");
  }

  TEST_CASE("g2 with tau_max = 0 gives one point") {
    TempDir d;
    REQUIRE(run({"--out", d.str(), "g2", "--tau-max", "0"}).code == 0);
    const auto g2 = io::read_correlation(d / "g2.csv");
    REQUIRE(g2.size() == 1);
    CHECK(g2.tau[0] == 0.0);
    CHECK(g2.g2[0] == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("g2 argument errors") {
    TempDir d;
    CHECK(run({"--out", d.str(), "g2", "--tau-max", "-1e-9"}).code == cli::kDataError);
    CHECK(run({"--out", d.str(), "g2", "--tau-step", "0"}).code == cli::kDataError);
  }

  TEST_CASE("invalid config gives a located error") {
    TempDir d;
    io::write_text_file(d.path / "bad.ini", "[detection]\n\ndetection_efficiency = 1.5\n");
    const auto r = run({"--config", d / "bad.ini", "--out", d.str(), "g2"});
    CHECK(r.code == cli::kDataError);
    CHECK(r.err.find("bad.ini:3") != std::string::npos);
    const auto missing = run({"--config", d / "nope.ini", "--out", d.str(), "g2"});
    CHECK(missing.code == cli::kDataError);
    CHECK(missing.err.find("nope.ini") != std::string::npos);
  }

  TEST_CASE("config file and environment fallback") {
    TempDir d;
    io::write_text_file(d.path / "deep.ini", "[trap]\ndepth_mk = 0.81\n");
    SUBCASE("explicit") {
      REQUIRE(run({"--config", d / "deep.ini", "--out", d.str(), "g2", "--tau-max", "0"}).code == 0);
    }
    SUBCASE("environment") {
      EnvGuard env(d / "deep.ini");
      REQUIRE(run({"--out", d.str(), "g2", "--tau-max", "0"}).code == 0);
    }
    CHECK(io::read_correlation(d / "g2.csv").metadata[0] == " trap_depth_mk=0.81");
  }

  TEST_CASE("explicit config wins over the environment") {
    TempDir d;
    io::write_text_file(d.path / "a.ini", "[trap]\ndepth_mk = 0.5\n");
    EnvGuard env(d / "missing.ini");
    REQUIRE(run({"--config", d / "a.ini", "--out", d.str(), "g2", "--tau-max", "0"}).code == 0);
    CHECK(run({"--out", d.str(), "g2", "--tau-max", "0"}).code == cli::kDataError);
  }

  TEST_CASE("hbt: zero duration is an empty-stream error") {
    TempDir d;
    const auto r = run({"--out", d.str(), "hbt", "--duration", "0"});
    CHECK(r.code == cli::kDataError);
    CHECK(r.err.find("empty") != std::string::npos);
    CHECK(run({"--out", d.str(), "hbt", "--duration", "-1"}).code == cli::kDataError);
  }

  TEST_CASE("hbt: dip at zero delay and byte-identical reruns") {
    TempDir a, b;
    const std::vector<std::string> args{"--seed", "11", "hbt", "--duration", "0.2", "--csv-tags"};
    auto with_out = [&](const TempDir& d) {
      std::vector<std::string> v{"--out", d.str()};
      v.insert(v.end(), args.begin(), args.end());
      return v;
    };
    const auto r1 = run(with_out(a));
    REQUIRE(r1.code == 0);
    auto wb = with_out(b);
    wb.insert(wb.begin(), {"--workers", "3"});
    const auto r2 = run(wb);
    REQUIRE(r2.code == 0);
    CHECK(r1.out == r2.out);
    for (const char* f : {"timetags.ttag", "timetags.csv", "g2_hbt.csv", "g2_hbt_corrected.csv"}) {
      CHECK_MESSAGE(io::read_text_file(a / f) == io::read_text_file(b / f), f);
    }
    const auto g2 = io::read_correlation(a / "g2_hbt.csv");
    CHECK(g2.kind == correlate::SeriesKind::measured);
    CHECK(*value_of(r1.out, "emissions") > 1e5);
    CHECK(*value_of(r1.out, "g2_zero_bin") < 0.5);
    const auto tags = io::read_timetags(a / "timetags.ttag");
    CHECK(tags.live_time == 200'000'000'000ull);
    CHECK(*value_of(r1.out, "rate_d1_cps") ==
          doctest::Approx(static_cast<double>(std::count_if(tags.tags.begin(), tags.tags.end(), [](const auto& t) {
                            return t.channel == mc::Channel::D1;
                          })) / 0.2));
  }

  TEST_CASE("hbt: other seeds differ") {
    TempDir a, b;
    REQUIRE(run({"--out", a.str(), "--seed", "1", "hbt", "--duration", "0.05"}).code == 0);
    REQUIRE(run({"--out", b.str(), "--seed", "2", "hbt", "--duration", "0.05"}).code == 0);
    CHECK(io::read_text_file(a / "timetags.ttag") != io::read_text_file(b / "timetags.ttag"));
  }

  TEST_CASE("telegraph") {
    TempDir a, b;
    const auto r = run({"--out", a.str(), "telegraph", "--duration", "300"});
    REQUIRE(r.code == 0);
    REQUIRE(run({"--out", b.str(), "--quiet", "telegraph", "--duration", "300"}).code == 0);
    CHECK(io::read_text_file(a / "telegraph.csv") == io::read_text_file(b / "telegraph.csv"));
    const auto tr = io::read_telegraph(a / "telegraph.csv");
    CHECK(tr.counts.size() == 3000);
    const auto doc = io::read_document(a / "occupancy_histogram.csv");
    const auto& h = std::get<io::OccupancyHistogram>(doc.payload);
    long total = 0;
    for (auto f : h.frequency) total += static_cast<long>(f);
    CHECK(total == 3000);
    CHECK(*value_of(r.out, "occupied_fraction") > 0.0);
    CHECK(*value_of(r.out, "gated_fraction") <= 1.0);
    CHECK(run({"--out", a.str(), "telegraph", "--duration", "0"}).code == cli::kDataError);
  }

  TEST_CASE("spectrum: synthesize then fit recovers the temperature") {
    TempDir d;
    const auto s = run({"--out", d.str(), "spectrum", "--noise-free"});
    REQUIRE(s.code == 0);
    CHECK(*value_of(s.out, "reference_fwhm_mhz") == doctest::Approx(1.05).epsilon(0.02));
    CHECK(*value_of(s.out, "fluorescence_fwhm_mhz") > *value_of(s.out, "reference_fwhm_mhz"));
    const auto f = run({"--out", d.str(), "spectrum", "--mode", "fit", "--reference", d / "reference.csv",
                        "--fluorescence", d / "fluorescence.csv"});
    REQUIRE(f.code == 0);
    const auto rep = io::read_report(d / "fit_report.txt");
    CHECK(*rep.get("E_kin_uK") == doctest::Approx(105.0).epsilon(0.01));
    CHECK(*rep.get("sys_low_uK") < *rep.get("E_kin_uK"));
    CHECK(*rep.get("sys_high_uK") > *rep.get("E_kin_uK"));
  }

  TEST_CASE("spectrum: noisy synthesis fits within a few standard errors") {
    TempDir d;
    REQUIRE(run({"--out", d.str(), "--seed", "5", "--override", "spectrum.temperature_uk=60", "spectrum"}).code ==
            0);
    for (const char* w : {"counting", "data"}) {
      const auto f = run({"--out", d.str(), "spectrum", "--mode", "fit", "--weighting", w, "--reference",
                          d / "reference.csv", "--fluorescence", d / "fluorescence.csv"});
      REQUIRE(f.code == 0);
      const auto rep = io::read_report(d / "fit_report.txt");
      CHECK(std::abs(*rep.get("E_kin_uK") - 60.0) < 4.0 * *rep.get("stat_err_uK") + 1.0);
    }
  }

  TEST_CASE("spectrum: fit with fluorescence = reference gives zero") {
    TempDir d;
    REQUIRE(run({"--out", d.str(), "--quiet", "spectrum", "--noise-free"}).code == 0);
    const auto f = run({"--out", d.str(), "spectrum", "--mode", "fit", "--reference", d / "reference.csv",
                        "--fluorescence", d / "reference.csv"});
    REQUIRE(f.code == 0);
    CHECK(*value_of(f.out, "E_kin_uK") == doctest::Approx(0.0).epsilon(1e-6));
  }

  TEST_CASE("spectrum: missing or wrong inputs") {
    TempDir d;
    const auto missing = run({"--out", d.str(), "spectrum", "--mode", "fit", "--reference", d / "nope.csv",
                              "--fluorescence", d / "nope.csv"});
    CHECK(missing.code == cli::kDataError);
    CHECK(missing.err.find("nope.csv") != std::string::npos);
    CHECK(run({"--out", d.str(), "spectrum", "--mode", "fit"}).code == cli::kDataError);

    io::write_text_file(d.path / "broken.csv", "#kind=spectrum\ndetuning_mhz,value,sigma\n0,1,0\n1,oops,0\n");
    const auto broken = run({"--out", d.str(), "spectrum", "--mode", "fit", "--reference", d / "broken.csv",
                             "--fluorescence", d / "broken.csv"});
    CHECK(broken.code == cli::kDataError);
    CHECK(broken.err.find("broken.csv:4") != std::string::npos);

    REQUIRE(run({"--out", d.str(), "--quiet", "g2", "--tau-max", "0"}).code == 0);
    CHECK(run({"--out", d.str(), "spectrum", "--mode", "fit", "--reference", d / "g2.csv", "--fluorescence",
               d / "g2.csv"})
              .code == cli::kDataError);
    CHECK(run({"--out", d.str(), "spectrum", "--span", "3"}).code == cli::kDataError);
  }

  TEST_CASE("verbose lists written files") {
    TempDir d;
    const auto r = run({"--out", d / "sub", "--verbose", "trap"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("wrote ") != std::string::npos);
    CHECK(fs::exists(d.path / "sub" / "trap_report.txt"));
  }

  TEST_CASE("every subcommand is byte-identical across runs") {
    for (const std::vector<std::string>& cmd :
         {std::vector<std::string>{"g2", "--tau-max", "20e-9"}, {"hbt", "--duration", "0.02"},
          {"telegraph", "--duration", "50"}, {"spectrum"}, {"trap"}}) {
      TempDir a, b;
      auto args_a = cmd, args_b = cmd;
      args_a.insert(args_a.begin(), {"--out", a.str()});
      args_b.insert(args_b.begin(), {"--out", b.str()});
      const auto ra = run(args_a), rb = run(args_b);
      REQUIRE(ra.code == 0);
      REQUIRE(rb.code == 0);
      CHECK(ra.out == rb.out);
      for (const auto& e : fs::directory_iterator(a.path)) {
        const auto name = e.path().filename().string();
        CHECK_MESSAGE(io::read_text_file(e.path()) == io::read_text_file(b / name), name);
      }
    }
  }
}
