#pragma once

// Central finite differences, used as the independent oracle for tape
// gradients. Only touches parameter values, never the tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace kcbtest {

// Perturbs each entry of `values` (in place, restored afterwards) and
// returns d loss / d value by central differences.
inline std::vector<double> central_diff(std::span<double> values, const std::function<double()>& loss,
                                        double h = 1e-5) {
    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = loss();
        values[i] = saved - h;
        const double down = loss();
        values[i] = saved;
        grad[i] = (up - down) / (2 * h);
    }
    return grad;
}

// Same, restricted to the listed coordinates.
inline std::vector<double> central_diff_at(std::span<double> values, std::span<const std::size_t> coords,
                                           const std::function<double()>& loss, double h = 1e-5) {
    std::vector<double> grad(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const std::size_t i = coords[k];
        const double saved = values[i];
        values[i] = saved + h;
        const double up = loss();
        values[i] = saved - h;
        const double down = loss();
        values[i] = saved;
        grad[k] = (up - down) / (2 * h);
    }
    return grad;
}

// ||a - b|| / max(||a||, ||b||); zero when both are (numerically) zero.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    if (denom < 1e-12) return std::sqrt(diff);
    return std::sqrt(diff) / denom;
}

}  // namespace kcbtest
