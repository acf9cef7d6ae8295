#pragma once

#include <cmath>
#include <numbers>

namespace smahp::detail {

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(z), accurate for large positive z.
inline double norm_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double norm_logpdf(double z)
{
    constexpr double half_log_2pi = 0.91893853320467274178;
    return -0.5 * z * z - half_log_2pi;
}

/// log(1 - Phi(z)).
inline double norm_logsf(double z)
{
    if (z < 30.0) return std::log(norm_sf(z));
    // asymptotic: 1 - Phi(z) ~ phi(z)/z * (1 - 1/z^2 + 3/z^4)
    const double z2 = z * z;
    return norm_logpdf(z) - std::log(z) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

/// Inverse Mills ratio phi(z) / (1 - Phi(z)).
inline double norm_hazard(double z)
{
    if (z < 30.0) {
        const double sf = norm_sf(z);
        if (sf > 0.0) return std::exp(norm_logpdf(z)) / sf;
    }
    const double z2 = z * z;
    return z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2));
}

} // namespace smahp::detail
