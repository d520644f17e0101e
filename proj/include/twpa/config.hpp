#pragma once

// INI-style run configuration with explicit unit suffixes on every physical
// quantity ("ic = \"1.4 uA\"").  Parsing is strict: a key read with an
// expected unit must carry that unit (possibly SI-prefixed), so a config
// written in the wrong scale fails loudly instead of simulating nonsense.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"
#include "twpa/netlist.hpp"

namespace twpa {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace detail

/// Parse a quantity string such as "1.4 uA", "93 fF", "6.0102 GHz", "50 Ohm",
/// "0.45 pi" or "12" (dimensionless) into SI units.  `unit` is the expected
/// base unit ("A", "F", "Hz", "H", "Ohm", "s", "V", "W", "m", "rad", "dBm",
/// or "" for a pure number).
inline double parse_quantity(const std::string& text, const std::string& unit) {
    const std::string t = detail::trim(detail::strip_quotes(detail::trim(text)));
    size_t pos = 0;
    double value = 0.0;
    try {
        value = std::stod(t, &pos);
    } catch (const std::exception&) {
        throw ConfigError("not a number: '" + text + "'");
    }
    std::string suffix = detail::trim(t.substr(pos));
    if (unit.empty()) {
        if (!suffix.empty()) throw ConfigError("expected a dimensionless value, got '" + text + "'");
        return value;
    }
    if (suffix.empty())
        throw ConfigError("missing unit on '" + text + "' (expected " + unit + ")");
    if (unit == "rad") {
        if (suffix == "rad") return value;
        if (suffix == "pi") return value * kPi;
        throw ConfigError("expected rad or pi on '" + text + "'");
    }
    if (unit == "dBm") {
        if (suffix == "dBm") return value;
        throw ConfigError("expected dBm on '" + text + "'");
    }
    // accept "Ohm" as the unit token for impedances
    static const std::map<char, double> kPrefix = {
        {'f', 1e-15}, {'p', 1e-12}, {'n', 1e-9}, {'u', 1e-6}, {'m', 1e-3},
        {'k', 1e3},   {'M', 1e6},   {'G', 1e9},  {'T', 1e12}};
    if (suffix == unit) return value;
    if (suffix.size() == unit.size() + 1 && suffix.substr(1) == unit) {
        auto it = kPrefix.find(suffix[0]);
        if (it != kPrefix.end()) return value * it->second;
    }
    throw ConfigError("unit mismatch: got '" + suffix + "', expected " + unit +
                      " (with optional SI prefix) in '" + text + "'");
}

/// Sectioned key-value configuration file.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text) {
        Config c;
        c.text_ = text;
        std::istringstream in(text);
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            // strip the first '#' that is not inside a quoted value
            bool in_quote = false;
            for (size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') {
                    in_quote = !in_quote;
                } else if (line[i] == '#' && !in_quote) {
                    line = line.substr(0, i);
                    break;
                }
            }
            const std::string t = detail::trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
                section = detail::trim(t.substr(1, t.size() - 2));
                c.sections_[section];
                continue;
            }
            const size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string val = detail::trim(t.substr(eq + 1));
            if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
            c.sections_[section][key] = val;
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
    bool has(const std::string& s, const std::string& k) const {
        auto it = sections_.find(s);
        return it != sections_.end() && it->second.count(k) > 0;
    }

    std::string get_string(const std::string& s, const std::string& k) const {
        auto it = sections_.find(s);
        if (it == sections_.end()) throw ConfigError("missing section [" + s + "]");
        auto kt = it->second.find(k);
        if (kt == it->second.end()) throw ConfigError("missing key '" + k + "' in [" + s + "]");
        return detail::strip_quotes(kt->second);
    }
    std::string get_string(const std::string& s, const std::string& k,
                           const std::string& fallback) const {
        return has(s, k) ? get_string(s, k) : fallback;
    }

    double get_quantity(const std::string& s, const std::string& k, const std::string& unit) const {
        return parse_quantity(get_string(s, k), unit);
    }
    double get_quantity(const std::string& s, const std::string& k, const std::string& unit,
                        double fallback) const {
        return has(s, k) ? get_quantity(s, k, unit) : fallback;
    }

    double get_number(const std::string& s, const std::string& k) const {
        return parse_quantity(get_string(s, k), "");
    }
    double get_number(const std::string& s, const std::string& k, double fallback) const {
        return has(s, k) ? get_number(s, k) : fallback;
    }

    int get_int(const std::string& s, const std::string& k) const {
        const double v = get_number(s, k);
        const int i = static_cast<int>(std::llround(v));
        if (v != static_cast<double>(i))
            throw ConfigError("'" + k + "' in [" + s + "] must be an integer");
        return i;
    }
    int get_int(const std::string& s, const std::string& k, int fallback) const {
        return has(s, k) ? get_int(s, k) : fallback;
    }

    bool get_bool(const std::string& s, const std::string& k, bool fallback) const {
        if (!has(s, k)) return fallback;
        const std::string v = get_string(s, k);
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ConfigError("'" + k + "' in [" + s + "] must be true/false");
    }

    const std::string& text() const { return text_; }

    /// FNV-1a hash of the raw config text, embedded in output headers so a
    /// result file can be traced to the exact configuration that produced it.
    uint64_t hash() const {
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : text_) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    std::string text_;
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Build the chain description from the [chain] (and optional [snail])
/// sections.
inline ChainSpec chain_from_config(const Config& c) {
    ChainSpec spec;
    spec.n_cells = c.get_int("chain", "cells");
    if (spec.n_cells < 1) throw ConfigError("[chain] cells must be >= 1");
    const std::string dev = c.get_string("chain", "device");
    if (dev == "jj") {
        JJParams p;
        p.i_c = c.get_quantity("chain", "ic", "A");
        p.c_j = c.get_quantity("chain", "cj", "F", 0.0);
        if (p.i_c <= 0.0) throw ConfigError("[chain] ic must be > 0");
        spec.series = p;
    } else if (dev == "snail") {
        SNAILParams p;
        p.n_series = c.get_int("snail", "n", 3);
        p.i_c1 = c.get_quantity("snail", "ic1", "A");
        p.i_c2 = c.get_quantity("snail", "ic2", "A");
        p.c_j1 = c.get_quantity("snail", "cj1", "F", 0.0);
        p.c_j2 = c.get_quantity("snail", "cj2", "F", 0.0);
        p.flux_f = c.get_quantity("snail", "flux", "rad");
        if (p.i_c1 <= 0.0 || p.i_c2 <= 0.0) throw ConfigError("[snail] ic1/ic2 must be > 0");
        spec.series = p;
    } else if (dev == "inductor") {
        spec.series = LinearInductor{c.get_quantity("chain", "l", "H")};
    } else {
        throw ConfigError("[chain] device must be jj, snail or inductor (got '" + dev + "')");
    }
    spec.c_shunt = c.get_quantity("chain", "c", "F");
    if (spec.c_shunt <= 0.0) throw ConfigError("[chain] c must be > 0");
    spec.z_source = c.get_quantity("chain", "z_source", "Ohm", 50.0);
    spec.z_load = c.get_quantity("chain", "z_load", "Ohm", 50.0);
    if (spec.z_source <= 0.0 || spec.z_load <= 0.0)
        throw ConfigError("[chain] terminations must be > 0");
    return spec;
}

/// Source amplitude in amperes from either an `amplitude` (A) or `power`
/// (dBm into the source impedance) key of the given section.
inline double drive_amplitude_from_config(const Config& c, const std::string& section,
                                          double z_source) {
    if (c.has(section, "amplitude")) return c.get_quantity(section, "amplitude", "A");
    if (c.has(section, "power")) {
        const double p_dbm = c.get_quantity(section, "power", "dBm");
        return norton_current_for_power(dbm_to_watt(p_dbm), z_source);
    }
    throw ConfigError("[" + section + "] needs amplitude (A) or power (dBm)");
}

}  // namespace twpa
