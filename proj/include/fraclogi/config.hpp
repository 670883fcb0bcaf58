#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fraclogi/common.hpp"
#include "fraclogi/grid.hpp"

namespace fraclogi {

/// Plain-text configuration: "[section]" headers, "key = value" lines, '#'
/// comments.  Parsing is strict: every key must be consumed by the mode that
/// runs, and leftovers are reported as errors (silent defaults would make
/// experiment outputs unreproducible claims).
class Config {
public:
    static Config parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ValidationError("cannot open config " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_text(ss.str());
    }

    static Config parse_text(const std::string& text) {
        Config cfg;
        cfg.raw_ = text;
        std::stringstream ss(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ValidationError("config line " + std::to_string(lineno) +
                                                              ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty()) throw ValidationError("config: empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
            const std::string full = section.empty() ? key : section + "." + key;
            if (cfg.values_.count(full))
                throw ValidationError("config: duplicate key '" + full + "'");
            cfg.values_[full] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string take_string(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ValidationError("config: missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second;
    }
    std::string take_string(const std::string& key, const std::string& fallback) {
        return has(key) ? take_string(key) : fallback;
    }

    double take_double(const std::string& key) { return to_double(key, take_string(key)); }
    double take_double(const std::string& key, double fallback) {
        return has(key) ? take_double(key) : fallback;
    }

    long take_long(const std::string& key) {
        const std::string s = take_string(key);
        std::size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(s, &pos);
        } catch (...) {
            throw ValidationError("config: key '" + key + "' is not an integer: " + s);
        }
        if (pos != s.size()) throw ValidationError("config: key '" + key + "' is not an integer: " + s);
        return v;
    }
    long take_long(const std::string& key, long fallback) { return has(key) ? take_long(key) : fallback; }

    bool take_bool(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const std::string s = take_string(key);
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw ValidationError("config: key '" + key + "' is not a boolean: " + s);
    }

    std::vector<double> take_doubles(const std::string& key) {
        const std::string s = take_string(key);
        std::stringstream ss(s);
        std::vector<double> out;
        std::string tok;
        while (ss >> tok) out.push_back(to_double(key, tok));
        if (out.empty()) throw ValidationError("config: key '" + key + "' has no values");
        return out;
    }

    /// Semicolon-separated list of space-separated number groups
    /// (e.g. compact masks: "-0.2 0.2 ; 0.6 0.9").
    std::vector<std::vector<double>> take_groups(const std::string& key) {
        const std::string s = take_string(key);
        std::vector<std::vector<double>> out;
        std::stringstream ss(s);
        std::string part;
        while (std::getline(ss, part, ';')) {
            std::stringstream ps(part);
            std::vector<double> grp;
            std::string tok;
            while (ps >> tok) grp.push_back(to_double(key, tok));
            if (!grp.empty()) out.push_back(grp);
        }
        return out;
    }

    /// Must be called after a mode has consumed its keys.
    void reject_unconsumed() const {
        std::vector<std::string> leftover;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) leftover.push_back(k);
        if (!leftover.empty()) {
            std::string msg = "config: unknown key(s):";
            for (const auto& k : leftover) msg += " '" + k + "'";
            throw ValidationError(msg);
        }
    }

    const std::string& raw_text() const { return raw_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }
    static double to_double(const std::string& key, const std::string& s) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (...) {
            throw ValidationError("config: key '" + key + "' is not a number: " + s);
        }
        if (pos != s.size()) throw ValidationError("config: key '" + key + "' is not a number: " + s);
        return v;
    }

    std::string raw_;
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

/// Grid/operator/problem sections shared by every mode.
struct CommonSetup {
    GridSpec grid_spec;
    double s = 0.5, p = 2.0;
    std::string cache_path;
    double q = 1.0, r = 2.0, b0 = 1.0;
    std::optional<double> lambda;
    std::vector<double> lambda_list;
};

inline CommonSetup read_common(Config& cfg, bool need_problem) {
    CommonSetup c;
    c.grid_spec.dimension = static_cast<int>(cfg.take_long("grid.dimension", 1));
    auto om = cfg.take_doubles("grid.omega");
    auto rf = cfg.take_doubles("grid.refuge");
    const std::size_t want = (c.grid_spec.dimension == 1) ? 2 : 4;
    if (om.size() != want || rf.size() != want)
        throw ValidationError("config: omega/refuge need " + std::to_string(want) + " numbers");
    c.grid_spec.omega.lo[0] = om[0];
    c.grid_spec.omega.hi[0] = om[1];
    c.grid_spec.refuge.lo[0] = rf[0];
    c.grid_spec.refuge.hi[0] = rf[1];
    if (c.grid_spec.dimension == 2) {
        c.grid_spec.omega.lo[1] = om[2];
        c.grid_spec.omega.hi[1] = om[3];
        c.grid_spec.refuge.lo[1] = rf[2];
        c.grid_spec.refuge.hi[1] = rf[3];
    }
    c.grid_spec.resolution = static_cast<int>(cfg.take_long("grid.resolution", 201));
    c.grid_spec.pad_fraction = cfg.take_double("grid.pad_fraction", 0.25);
    c.s = cfg.take_double("operator.s", 0.5);
    c.p = cfg.take_double("operator.p", 2.0);
    c.cache_path = cfg.take_string("operator.cache", "");
    if (need_problem) {
        c.q = cfg.take_double("problem.q");
        c.r = cfg.take_double("problem.r");
        c.b0 = cfg.take_double("problem.b0", 1.0);
        if (cfg.has("problem.lambda")) c.lambda = cfg.take_double("problem.lambda");
        if (cfg.has("problem.lambda_list")) c.lambda_list = cfg.take_doubles("problem.lambda_list");
        if (!c.lambda && c.lambda_list.empty())
            throw ValidationError("config: set problem.lambda or problem.lambda_list");
    }
    return c;
}

} // namespace fraclogi
