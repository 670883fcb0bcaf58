#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "fraclogi/common.hpp"

namespace fraclogi {

/// Axis-aligned box; only the first `dim` axes are meaningful.
struct Box {
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{0.0, 0.0};

    static Box interval(double a, double b) { return Box{{a, 0.0}, {b, 0.0}}; }
    static Box square(double a, double b) { return Box{{a, a}, {b, b}}; }

    bool contains_strict(const std::array<double, 2>& x, int dim) const {
        for (int k = 0; k < dim; ++k)
            if (!(lo[k] < x[k] && x[k] < hi[k])) return false;
        return true;
    }
    double width(int axis) const { return hi[axis] - lo[axis]; }
};

struct GridSpec {
    int dimension = 1;
    Box omega;                  // the domain where the equation lives
    Box refuge;                 // sub-box with zero absorption, strictly inside omega
    int resolution = 201;       // nodes per axis across the bounding box
    double pad_fraction = 0.25; // exterior collar width per side, relative to omega width
};

/// Uniform tensor grid on a bounding box that strictly contains omega.
/// Node coordinates are box.lo + i*h per axis (row-major ordering in 2D).
/// Each node is the midpoint of a cell of volume h^dim; the union of cells is
/// the box inflated by h/2 per side (tail_box), which is where the analytic
/// far-field integrals of the nonlocal operator take over.
class Grid {
public:
    int dim = 1;
    int n_axis = 0;             // nodes per axis
    std::size_t n_nodes = 0;
    double h = 0.0;
    double cell_volume = 0.0;
    Box box;                    // node-extent box
    Box omega;
    Box refuge;
    std::vector<std::array<double, 2>> coords; // [i] -> (x, y); y = 0 in 1D
    std::vector<std::uint8_t> interior_mask;
    std::vector<std::uint8_t> refuge_mask;

    std::size_t index(int ix, int iy = 0) const {
        return static_cast<std::size_t>(iy) * static_cast<std::size_t>(n_axis) + static_cast<std::size_t>(ix);
    }

    Box tail_box() const {
        Box t = box;
        for (int k = 0; k < dim; ++k) {
            t.lo[k] -= 0.5 * h;
            t.hi[k] += 0.5 * h;
        }
        return t;
    }

    std::size_t count(const std::vector<std::uint8_t>& mask) const {
        std::size_t c = 0;
        for (auto m : mask) c += m ? 1 : 0;
        return c;
    }
    std::size_t interior_count() const { return count(interior_mask); }
    std::size_t refuge_count() const { return count(refuge_mask); }

    /// Nodes inside an arbitrary sub-box (used for compact-set diagnostics).
    std::vector<std::uint8_t> mask_of_box(const Box& b) const {
        std::vector<std::uint8_t> m(n_nodes, 0);
        for (std::size_t i = 0; i < n_nodes; ++i)
            m[i] = b.contains_strict(coords[i], dim) ? 1 : 0;
        return m;
    }

    /// FNV-1a over coordinates and masks; keys the operator weight cache.
    std::uint64_t hash() const {
        std::uint64_t hsh = 1469598103934665603ULL;
        auto eat = [&hsh](const void* p, std::size_t n) {
            const unsigned char* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                hsh ^= b[i];
                hsh *= 1099511628211ULL;
            }
        };
        eat(&dim, sizeof dim);
        eat(&n_axis, sizeof n_axis);
        eat(&h, sizeof h);
        for (const auto& c : coords) eat(c.data(), sizeof(double) * 2);
        eat(interior_mask.data(), interior_mask.size());
        eat(refuge_mask.data(), refuge_mask.size());
        return hsh;
    }
};

/// Real values on grid nodes, identically zero on exterior nodes.
struct Field {
    const Grid* grid = nullptr;
    std::vector<double> v;

    Field() = default;
    explicit Field(const Grid& g) : grid(&g), v(g.n_nodes, 0.0) {}
    Field(const Grid& g, std::vector<double> values) : grid(&g), v(std::move(values)) {
        if (v.size() != g.n_nodes) throw ValidationError("field size does not match grid");
    }

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }

    double linf() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }

    /// Enforces the type invariants: finite values, zero outside the interior.
    void validate() const {
        if (!grid) throw ValidationError("field has no grid");
        if (!all_finite(v)) throw ValidationError("field has non-finite values");
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!grid->interior_mask[i] && v[i] != 0.0)
                throw ValidationError("field is nonzero on an exterior node");
    }
};

inline Field masked(const Field& u, const std::vector<std::uint8_t>& mask) {
    Field out(*u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) out.v[i] = mask[i] ? u.v[i] : 0.0;
    return out;
}

inline bool is_supported_on(const Field& u, const std::vector<std::uint8_t>& mask) {
    for (std::size_t i = 0; i < u.size(); ++i)
        if (!mask[i] && u.v[i] != 0.0) return false;
    return true;
}

inline Grid build_grid(const GridSpec& spec) {
    if (spec.dimension != 1 && spec.dimension != 2)
        throw ValidationError("grid dimension must be 1 or 2");
    if (spec.resolution < 2) throw ValidationError("resolution too small");
    if (!(spec.pad_fraction > 0.0)) throw ValidationError("pad_fraction must be positive");

    const int d = spec.dimension;
    for (int k = 0; k < d; ++k) {
        if (!(spec.omega.lo[k] < spec.omega.hi[k]))
            throw ValidationError("omega box is empty on axis " + std::to_string(k));
        if (!(spec.omega.lo[k] < spec.refuge.lo[k] && spec.refuge.hi[k] < spec.omega.hi[k]))
            throw ValidationError("refuge box must lie strictly inside omega");
        if (!(spec.refuge.lo[k] < spec.refuge.hi[k]))
            throw ValidationError("refuge box is empty on axis " + std::to_string(k));
    }
    if (d == 2) {
        const double wx = spec.omega.width(0), wy = spec.omega.width(1);
        if (std::abs(wx - wy) > 1e-12 * std::max(wx, wy))
            throw ValidationError("2d omega must be square (uniform spacing)");
    }

    Grid g;
    g.dim = d;
    g.n_axis = spec.resolution;
    g.omega = spec.omega;
    g.refuge = spec.refuge;
    for (int k = 0; k < d; ++k) {
        const double pad = spec.pad_fraction * spec.omega.width(k);
        g.box.lo[k] = spec.omega.lo[k] - pad;
        g.box.hi[k] = spec.omega.hi[k] + pad;
    }
    g.h = g.box.width(0) / static_cast<double>(g.n_axis - 1);
    g.cell_volume = (d == 1) ? g.h : g.h * g.h;

    const std::size_t n = (d == 1) ? static_cast<std::size_t>(g.n_axis)
                                   : static_cast<std::size_t>(g.n_axis) * g.n_axis;
    g.n_nodes = n;
    g.coords.resize(n);
    g.interior_mask.assign(n, 0);
    g.refuge_mask.assign(n, 0);

    const int ny = (d == 1) ? 1 : g.n_axis;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < g.n_axis; ++ix) {
            std::array<double, 2> x{g.box.lo[0] + ix * g.h, 0.0};
            if (d == 2) x[1] = g.box.lo[1] + iy * g.h;
            const std::size_t i = g.index(ix, iy);
            g.coords[i] = x;
            g.interior_mask[i] = g.omega.contains_strict(x, d) ? 1 : 0;
            g.refuge_mask[i] = g.refuge.contains_strict(x, d) ? 1 : 0;
        }
    }

    // Invariants.
    for (std::size_t i = 0; i < n; ++i)
        if (g.refuge_mask[i] && !g.interior_mask[i])
            throw ValidationError("internal: refuge node outside interior");
    // >= 8 nodes per axis across omega
    int across = 0;
    for (int ix = 0; ix < g.n_axis; ++ix) {
        const double x = g.box.lo[0] + ix * g.h;
        if (spec.omega.lo[0] < x && x < spec.omega.hi[0]) ++across;
    }
    if (across < 8) throw ValidationError("resolution gives fewer than 8 nodes per axis across omega");
    if (g.refuge_count() == 0) throw ValidationError("refuge contains no grid node at this resolution");
    if (g.refuge_count() == g.interior_count())
        throw ValidationError("no interior node outside the refuge at this resolution");
    // exterior collar present on every side
    bool lo_out = false, hi_out = false;
    for (int ix = 0; ix < g.n_axis; ++ix) {
        const double x = g.box.lo[0] + ix * g.h;
        lo_out |= (x <= spec.omega.lo[0]);
        hi_out |= (x >= spec.omega.hi[0]);
    }
    if (!lo_out || !hi_out) throw ValidationError("bounding box does not surround omega with exterior nodes");
    return g;
}

/// Two-level absorption coefficient: b0 on interior nodes outside the refuge,
/// zero on the refuge and on the exterior.
inline Field build_absorption(const Grid& g, double b0) {
    if (!(b0 > 0.0)) throw ValidationError("absorption amplitude must be positive");
    Field b(g);
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        b.v[i] = (g.interior_mask[i] && !g.refuge_mask[i]) ? b0 : 0.0;
    return b;
}

/// d(., M^c)^s profile over the grid: at nodes of `target`, the minimum node-to-node
/// Euclidean distance to the complement of `target`, raised to the power s; zero
/// elsewhere.  Distances are node-to-node, so the profile carries an O(h) offset
/// relative to the continuum distance.
inline Field distance_profile(const Grid& g, const std::vector<std::uint8_t>& target, double s) {
    if (target.size() != g.n_nodes) throw ValidationError("mask size mismatch");
    std::size_t inside = 0;
    for (auto m : target) inside += m ? 1 : 0;
    if (inside == 0) throw ValidationError("distance_profile: empty target mask");
    if (inside == g.n_nodes) throw ValidationError("distance_profile: mask complement is empty");

    std::vector<std::size_t> outside;
    outside.reserve(g.n_nodes - inside);
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        if (!target[i]) outside.push_back(i);

    Field out(g);
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!target[i]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j : outside) {
            const double dx = g.coords[i][0] - g.coords[j][0];
            const double dy = g.coords[i][1] - g.coords[j][1];
            best = std::min(best, dx * dx + dy * dy);
        }
        out.v[i] = std::pow(std::sqrt(best), s);
    }
    return out;
}

} // namespace fraclogi
