#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fraclogi {

/// Thrown when inputs violate a documented precondition or file/config schema.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an iterative solver fails to certify its tolerance.
/// Carries the last iterate so callers can inspect or restart.
struct SolverFailure : std::runtime_error {
    std::vector<double> last_iterate;
    double residual = 0.0;
    long iterations = 0;

    SolverFailure(const std::string& what, std::vector<double> last, double res, long iters)
        : std::runtime_error(what), last_iterate(std::move(last)), residual(res), iterations(iters) {}
};

/// Signed power  phi_m(t) = |t|^{m-1} t,  the nonlinearity of the m-Laplacian
/// and of the nodal source/absorption terms.  phi_2 is the identity.
inline double signed_pow(double t, double m) {
    if (m == 2.0) return t;
    if (t == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(t), m - 1.0), t);
}

inline double sqr(double t) { return t * t; }

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

constexpr double kTiny = 1e-300;

} // namespace fraclogi
