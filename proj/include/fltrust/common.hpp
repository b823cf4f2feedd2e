#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fltrust {

// Flat vector of model parameters or of a model update. All routines in this
// library treat it as a plain dense double vector; the layout is owned by the
// ModelSpec that produced it.
using ParamVector = std::vector<double>;

// Invalid or inconsistent configuration, detected before any work starts.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (IDX, CSV, JSON). Message names the offending
// location (byte offset or line).
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced during numeric evaluation.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training aborted because parameters left the finite range.
struct divergence_error : std::runtime_error {
    int round;
    divergence_error(int round_, const std::string& msg)
        : std::runtime_error(msg), round(round_) {}
};

inline double dot(const ParamVector& a, const ParamVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

// y += alpha * x
inline void axpy(double alpha, const ParamVector& x, ParamVector& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline ParamVector scaled(const ParamVector& v, double alpha) {
    ParamVector out(v);
    for (double& x : out) x *= alpha;
    return out;
}

inline ParamVector sum(const ParamVector& a, const ParamVector& b) {
    ParamVector out(a);
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

inline ParamVector difference(const ParamVector& a, const ParamVector& b) {
    ParamVector out(a);
    for (std::size_t i = 0; i < b.size(); ++i) out[i] -= b[i];
    return out;
}

inline bool all_finite(const ParamVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline ParamVector sign_of(const ParamVector& v) {
    ParamVector s(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        s[i] = (v[i] > 0.0) ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
    return s;
}

}  // namespace fltrust
