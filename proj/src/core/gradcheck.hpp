// Finite-difference oracles for every differentiable module. Each driver
// builds a reduced 64-bit instance, runs autodiff once, then probes every
// parameter coordinate with central differences and reports the worst
// relative error. Used by the CLI `gradcheck` verb and the acceptance suite.
#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"

namespace tauflow {

struct GradCheckReport {
  std::string module;
  double max_rel_err = 0.0;
  int64_t coords = 0;  // parameter coordinates probed
};

// Names accepted by run_gradcheck, in execution order.
const std::vector<std::string>& gradcheck_modules();

// Runs the oracle for one module, or all of them when `module` is empty.
// Unknown names are rejected. `eps` is the central-difference half-step.
std::vector<GradCheckReport> run_gradcheck(const std::string& module = "", double eps = 1e-4);

}  // namespace tauflow
