#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>

#include "ablate/optim.hpp"
#include "ablate/tape.hpp"

namespace ablate {

// Builds a scalar loss on the given tape from leaf vars for each parameter.
using LossBuilder = std::function<Var(Tape&, std::map<std::string, Var>&)>;

GradSet autodiff_grads(const LossBuilder& build, const ParamSet& params);

double loss_value(const LossBuilder& build, const ParamSet& params);

// Max over (masked) parameters of |autodiff - central difference| /
// (|central difference| + 1e-8). Empty mask checks every parameter.
double grad_check(const LossBuilder& build, const ParamSet& params, double h,
                  const std::set<std::string>& mask = {});

}  // namespace ablate
