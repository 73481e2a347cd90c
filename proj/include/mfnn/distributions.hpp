#pragma once

namespace mfnn {

// Standard normal CDF via erfc (double precision through the whole tail).
double normal_cdf(double z);
double normal_pdf(double z);

// Inverse standard normal CDF, Acklam's rational approximation refined with
// one Halley step (relative error well below 1e-12 on (0,1)).
double normal_ppf(double p);

double laplace_cdf(double x, double u, double b);
// u - b * sign(p - 1/2) * ln(1 - 2|p - 1/2|)
double laplace_ppf(double p, double u, double b);

}  // namespace mfnn
