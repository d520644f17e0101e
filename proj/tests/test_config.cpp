#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "twpa/config.hpp"
#include "twpa/csv.hpp"
#include "twpa/sweep.hpp"

using namespace twpa;

TEST_CASE("quantity parsing handles SI prefixes and rejects wrong units") {
    CHECK(parse_quantity("1.4 uA", "A") == doctest::Approx(1.4e-6));
    CHECK(parse_quantity("93 fF", "F") == doctest::Approx(93e-15));
    CHECK(parse_quantity("6.0102 GHz", "Hz") == doctest::Approx(6.0102e9));
    CHECK(parse_quantity("\"0.27 nH\"", "H") == doctest::Approx(0.27e-9));
    CHECK(parse_quantity("50 Ohm", "Ohm") == doctest::Approx(50.0));
    CHECK(parse_quantity("2 kOhm", "Ohm") == doctest::Approx(2000.0));
    CHECK(parse_quantity("0.45 pi", "rad") == doctest::Approx(0.45 * kPi));
    CHECK(parse_quantity("1.5 rad", "rad") == doctest::Approx(1.5));
    CHECK(parse_quantity("-97 dBm", "dBm") == doctest::Approx(-97.0));
    CHECK(parse_quantity("12", "") == doctest::Approx(12.0));
    CHECK_THROWS_AS(parse_quantity("1.4", "A"), ConfigError);         // missing unit
    CHECK_THROWS_AS(parse_quantity("1.4 uF", "A"), ConfigError);      // wrong unit
    CHECK_THROWS_AS(parse_quantity("1.4 qA", "A"), ConfigError);      // unknown prefix
    CHECK_THROWS_AS(parse_quantity("1.4 uA", ""), ConfigError);       // unexpected unit
    CHECK_THROWS_AS(parse_quantity("abc", "A"), ConfigError);
    CHECK_THROWS_AS(parse_quantity("3 GHz", "rad"), ConfigError);
}

static const char* kSample = R"(# sample run
[chain]
cells = 100
device = "jj"
ic = "1.4 uA"
cj = "10 fF"
c = "108.6 fF"

[pump]
f = "6.0102 GHz"
amplitude = "659 nA"  # half the critical current
)";

TEST_CASE("config sections, fallbacks and the chain builder") {
    Config c = Config::parse(kSample);
    CHECK(c.has_section("chain"));
    CHECK(c.get_int("chain", "cells") == 100);
    CHECK(c.get_string("chain", "device") == "jj");
    CHECK(c.get_quantity("pump", "amplitude", "A") == doctest::Approx(659e-9));
    CHECK(c.get_quantity("pump", "dc", "A", 0.0) == 0.0);  // fallback
    CHECK(c.get_string("chain", "method", "lu") == "lu");

    ChainSpec spec = chain_from_config(c);
    CHECK(spec.n_cells == 100);
    CHECK(std::get<JJParams>(spec.series).i_c == doctest::Approx(1.4e-6));
    CHECK(std::get<JJParams>(spec.series).c_j == doctest::Approx(10e-15));
    CHECK(spec.c_shunt == doctest::Approx(108.6e-15));
    CHECK(spec.z_source == 50.0);

    CHECK(drive_amplitude_from_config(c, "pump", spec.z_source) == doctest::Approx(659e-9));
}

TEST_CASE("config rejects malformed input") {
    CHECK_THROWS_AS(Config::parse("[chain\ncells = 1\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("just words\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("= 3\n"), ConfigError);
    Config c = Config::parse(kSample);
    CHECK_THROWS_AS(c.get_string("chain", "nope"), ConfigError);
    CHECK_THROWS_AS(c.get_string("nope", "x"), ConfigError);

    // bad device and missing mandatory keys surface as ConfigError
    CHECK_THROWS_AS(chain_from_config(Config::parse("[chain]\ncells = 2\ndevice = \"foo\"\n")),
                    ConfigError);
    CHECK_THROWS_AS(
        chain_from_config(Config::parse("[chain]\ncells = 2\ndevice = \"jj\"\nc = \"1 fF\"\n")),
        ConfigError);
}

TEST_CASE("power key converts dBm into a Norton amplitude") {
    Config c = Config::parse("[signal]\npower = \"-100 dBm\"\n");
    const double i = drive_amplitude_from_config(c, "signal", 50.0);
    CHECK(i == doctest::Approx(norton_current_for_power(1e-13, 50.0)));
    CHECK_THROWS_AS(drive_amplitude_from_config(c, "pump", 50.0), ConfigError);
}

TEST_CASE("config hash is deterministic and content-sensitive") {
    Config a = Config::parse(kSample);
    Config b = Config::parse(kSample);
    Config d = Config::parse("[chain]\ncells = 2\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != d.hash());
}

TEST_CASE("csv writer stamps a provenance header and enforces row width") {
    const std::string path = "test_config_out.csv";
    {
        CsvWriter w(path);
        w.comment("config_hash", uint64_t{0xdeadbeef});
        w.comment("solver", "lu k=5");
        w.columns({"x", "y"});
        w.row({1.0, 2.0});
        CHECK_THROWS_AS(w.row({1.0}), Error);
        CHECK_THROWS_AS(w.comment("late", "no"), Error);
    }
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    CHECK(text.find("# version:") != std::string::npos);
    CHECK(text.find("# config_hash: 00000000deadbeef") != std::string::npos);
    CHECK(text.find("# solver: lu k=5") != std::string::npos);
    CHECK(text.find("x,y\n1,2\n") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("worker count resolution order: request, environment, hardware") {
    CHECK(resolve_jobs(3) == 3);
    setenv("TWPA_HB_THREADS", "2", 1);
    CHECK(resolve_jobs(0) == 2);
    CHECK(resolve_jobs(5) == 5);
    setenv("TWPA_HB_THREADS", "zero", 1);
    CHECK_THROWS_AS(resolve_jobs(0), ConfigError);
    setenv("TWPA_HB_THREADS", "-1", 1);
    CHECK_THROWS_AS(resolve_jobs(0), ConfigError);
    unsetenv("TWPA_HB_THREADS");
    CHECK(resolve_jobs(0) >= 1);
}

TEST_CASE("parallel sweep covers every index once and propagates failures") {
    std::vector<std::atomic<int>> hits(257);
    for (auto& h : hits) h = 0;
    parallel_for(257, 4, [&](int i) { hits[static_cast<size_t>(i)]++; });
    for (auto& h : hits) CHECK(h == 1);

    parallel_for(0, 4, [&](int) { CHECK(false); });  // empty range is a no-op

    CHECK_THROWS_AS(parallel_for(16, 4,
                                 [](int i) {
                                     if (i == 7) throw NoSolutionError("point 7 failed");
                                 }),
                    NoSolutionError);
}
