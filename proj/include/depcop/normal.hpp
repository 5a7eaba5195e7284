#pragma once

namespace depcop {

double normal_pdf(double x);
double normal_cdf(double x);

/// Inverse of the standard normal CDF for p in (0, 1).
///
/// Acklam's rational approximation (relative error below 1.15e-9) followed by
/// one Halley step against std::erfc, which brings the absolute error down to
/// a few ulps across the whole open interval. Coefficients are listed in
/// normal.cpp. Throws InvalidParameter outside (0, 1).
double normal_quantile(double p);

}  // namespace depcop
