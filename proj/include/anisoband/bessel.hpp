#pragma once

namespace anisoband {

// First-kind Bessel functions of order 0 and 1 from the integral
// J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt. The integrand is periodic
// and analytic, so the trapezoid rule converges geometrically once the node
// count exceeds |x| by a margin.
double bessel_j0(double x);
double bessel_j1(double x);

}  // namespace anisoband
