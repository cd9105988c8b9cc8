#pragma once

#include <cmath>
#include <functional>
#include <string>

namespace qutnn {

/// Scalar activation with its derivative. Requirements: sigma(0) = 0,
/// sigma'(0) > 0, unbounded above.
struct ActivationSpec {
  std::string name;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;
  double deriv_at_zero = 0.0;
};

/// sigma(u) = log(1 + e^u) - log 2, computed as max(u,0) + log1p(e^{-|u|}) - log 2
/// so large inputs do not overflow. sigma'(u) is the logistic function,
/// sigma'(0) = 1/2.
ActivationSpec softplus_centered();

/// Looks an activation up by name ("softplus_centered"). Throws Error on
/// unknown names; used when loading serialized models.
ActivationSpec activation_by_name(const std::string& name);

}  // namespace qutnn
