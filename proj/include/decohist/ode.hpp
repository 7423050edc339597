// ode.hpp - adaptive Dormand-Prince 5(4) integrator for small autonomous systems

#pragma once

#include <functional>
#include <vector>

namespace decohist {

using OdeRhs = std::function<void(const std::vector<double>& y, std::vector<double>& dy)>;

struct OdeOptions {
    double rtol{1e-10};
    double atol{1e-12};
    long max_steps{1000000};
};

// Integrates dy/dt = f(y) from t0 to t1 (either direction). Throws
// NumericalError if the step size underflows or max_steps is exceeded.
std::vector<double> integrate_ode(const OdeRhs& f, std::vector<double> y, double t0, double t1,
                                  const OdeOptions& opt = {});

}  // namespace decohist
