#pragma once

#include <cstdint>

namespace hmcperfect {

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
/// Arguments at or outside the unit interval's endpoints are clamped to
/// +/-8.2 and counted in inverse_normal_clamp_count().
double inverse_normal_cdf(double u);

std::uint64_t inverse_normal_clamp_count();

double normal_cdf(double x);

/// log Gamma(x) for x > 0.
double log_gamma(double x);

}  // namespace hmcperfect
