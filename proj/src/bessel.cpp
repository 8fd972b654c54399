#include "anisoband/bessel.hpp"

#include <cmath>
#include <numbers>

namespace anisoband {

namespace {

double bessel_integral(int order, double x) {
  const double ax = std::abs(x);
  // Nodes on [0, 2 pi); the even integrand lets us fold onto [0, pi].
  const int n = 2 * (32 + static_cast<int>(std::ceil(ax)));
  const double h = 2.0 * std::numbers::pi / n;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = i * h;
    sum += std::cos(order * t - x * std::sin(t));
  }
  return sum / n;
}

}  // namespace

double bessel_j0(double x) { return bessel_integral(0, std::abs(x)); }

// Odd by construction, and exactly zero at the origin where the node sum
// would only cancel to rounding.
double bessel_j1(double x) {
  if (x == 0.0) return 0.0;
  const double v = bessel_integral(1, std::abs(x));
  return x < 0.0 ? -v : v;
}

}  // namespace anisoband
