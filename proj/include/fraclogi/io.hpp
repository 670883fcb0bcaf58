#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraclogi/common.hpp"
#include "fraclogi/grid.hpp"
#include "fraclogi/parabolic.hpp"

namespace fraclogi {

/// 17 significant digits: round-trips any double exactly.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Run-length encoding of a node mask, row-major: "<count>x<bit>,..."
inline std::string rle_mask(const std::vector<std::uint8_t>& mask) {
    std::string out;
    std::size_t i = 0;
    while (i < mask.size()) {
        std::size_t j = i;
        while (j < mask.size() && mask[j] == mask[i]) ++j;
        if (!out.empty()) out += ',';
        out += std::to_string(j - i) + 'x' + (mask[i] ? '1' : '0');
        i = j;
    }
    return out;
}

inline void write_field_csv(const std::string& path, const Field& u) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open " + path + " for writing");
    const Grid& g = *u.grid;
    f << (g.dim == 1 ? "index,x,value\n" : "index,x,y,value\n");
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        f << i << ',' << fmt17(g.coords[i][0]);
        if (g.dim == 2) f << ',' << fmt17(g.coords[i][1]);
        f << ',' << fmt17(u.v[i]) << '\n';
    }
    if (!f) throw ValidationError("write failed for " + path);
}

inline Field read_field_csv(const std::string& path, const Grid& g) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ValidationError("empty field file " + path);
    Field u(g);
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() != (g.dim == 1 ? 3u : 4u)) throw ValidationError("bad field row: " + line);
        const std::size_t idx = std::stoul(cols[0]);
        if (idx >= g.n_nodes) throw ValidationError("field row index out of range");
        u.v[idx] = std::stod(cols.back());
        ++rows;
    }
    if (rows != g.n_nodes) throw ValidationError("field file does not cover the grid");
    return u;
}

inline void write_series_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open " + path + " for writing");
    f << "t,linf,l2_omega,l2_refuge,E,E_refuge,I_refuge,dE_defect\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        f << fmt17(traj.times[i]) << ',' << fmt17(traj.linf[i]) << ',' << fmt17(traj.l2_omega[i]) << ','
          << fmt17(traj.l2_refuge[i]) << ',' << fmt17(traj.energy[i]) << ','
          << fmt17(traj.energy_refuge[i]) << ',' << fmt17(traj.nehari_refuge[i]) << ','
          << fmt17(traj.de_defect[i]) << '\n';
    }
}

/// Reads back a series CSV into a bare trajectory (times + scalar series only).
inline Trajectory read_series_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ValidationError("empty series file");
    Trajectory t;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(std::stod(tok));
        if (cols.size() != 8) throw ValidationError("bad series row: " + line);
        t.times.push_back(cols[0]);
        t.linf.push_back(cols[1]);
        t.l2_omega.push_back(cols[2]);
        t.l2_refuge.push_back(cols[3]);
        t.energy.push_back(cols[4]);
        t.energy_refuge.push_back(cols[5]);
        t.nehari_refuge.push_back(cols[6]);
        t.de_defect.push_back(cols[7]);
        t.increment_l2.push_back(0.0);
        t.dt_used.push_back(0.0);
        t.truncation_active.push_back(0);
    }
    return t;
}

inline nlohmann::json grid_json(const Grid& g) {
    nlohmann::json j;
    j["dimension"] = g.dim;
    j["nodes_per_axis"] = g.n_axis;
    j["n_nodes"] = g.n_nodes;
    j["h"] = g.h;
    j["box"] = {g.box.lo[0], g.box.hi[0]};
    if (g.dim == 2) j["box_y"] = {g.box.lo[1], g.box.hi[1]};
    j["omega"] = {g.omega.lo[0], g.omega.hi[0]};
    j["refuge"] = {g.refuge.lo[0], g.refuge.hi[0]};
    j["interior_mask_rle"] = rle_mask(g.interior_mask);
    j["refuge_mask_rle"] = rle_mask(g.refuge_mask);
    j["hash"] = g.hash();
    return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

} // namespace fraclogi
