// Marchenko-Pastur law: closed-form density and resolvent.
#pragma once

#include "ncw/core.hpp"

namespace ncw {

struct MpParams {
  double sigma2 = 1.0;
  double kappa = 1.0;  // in (0, 1]

  double lower_edge() const;  // sigma2 (sqrt(kappa) - 1)^2
  double upper_edge() const;  // sigma2 (sqrt(kappa) + 1)^2
};

double mp_density(double lambda, const MpParams& p);

// Resolvent on the physical sheet: ~ 1/z at infinity, Im g < 0 for Im z > 0.
Complex mp_resolvent(Complex z, const MpParams& p);

}  // namespace ncw
