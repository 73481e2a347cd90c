#include "mfnn/distributions.hpp"

#include <cmath>

#include "mfnn/error.hpp"

namespace mfnn {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

namespace {

// Acklam's coefficients.
constexpr double A[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                        1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
constexpr double B[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                        6.680131188771972e+01, -1.328068155288572e+01};
constexpr double C[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                        -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
constexpr double D[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                        3.754408661907416e+00};

double acklam(double p) {
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q /
        (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  }
  return x;
}

}  // namespace

double normal_ppf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_ppf requires p in (0,1)");
  double x = acklam(p);
  // One Halley refinement against the exact CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double laplace_cdf(double x, double u, double b) {
  if (b <= 0.0) throw DomainError("laplace scale must be positive");
  const double z = (x - u) / b;
  return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
}

double laplace_ppf(double p, double u, double b) {
  if (b <= 0.0) throw DomainError("laplace scale must be positive");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("laplace_ppf requires p in (0,1)");
  const double d = p - 0.5;
  const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  return u - b * s * std::log(1.0 - 2.0 * std::abs(d));
}

}  // namespace mfnn
