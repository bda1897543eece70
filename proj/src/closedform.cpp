#include "ncw/closedform.hpp"

#include <cmath>
#include <numbers>

namespace ncw {

double MpParams::lower_edge() const {
  const double r = std::sqrt(kappa) - 1.0;
  return sigma2 * r * r;
}

double MpParams::upper_edge() const {
  const double r = std::sqrt(kappa) + 1.0;
  return sigma2 * r * r;
}

double mp_density(double lambda, const MpParams& p) {
  const double lo = p.lower_edge();
  const double hi = p.upper_edge();
  if (lambda <= 0.0 || lambda <= lo || lambda >= hi) return 0.0;
  return std::sqrt((hi - lambda) * (lambda - lo)) / (2.0 * std::numbers::pi * p.kappa * p.sigma2 * lambda);
}

Complex mp_resolvent(Complex z, const MpParams& p) {
  // (z - a)^2 - 4 z kappa sigma2 factors as (z - lo)(z - hi); the product of
  // principal roots is the branch that grows like z with the cut on the
  // support. The rationalized form 2 / (z - a + s) avoids cancellation.
  const double a = p.sigma2 * (1.0 - p.kappa);
  const Complex s = std::sqrt(z - p.upper_edge()) * std::sqrt(z - p.lower_edge());
  return 2.0 / (z - a + s);
}

}  // namespace ncw
