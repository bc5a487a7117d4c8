#ifndef VTRACK_OPTIMIZER_HPP
#define VTRACK_OPTIMIZER_HPP

#include <Eigen/Dense>
#include <functional>

namespace vtrack {

struct OptimizerConfig {
  double param_tolerance = 1e-3;  // scaled parameter units
  double value_tolerance = 1e-4;  // relative energy decrease per sweep
  int max_iterations = 50;        // Powell sweeps
  double bracket_step = 0.5;      // initial line-search step, scaled units
};

struct BrentResult {
  double x = 0.0;
  double f = 0.0;
  bool converged = false;
};

// Brent's parabolic/golden-section minimization on a bracket (a, b, c) with
// f(b) < f(a) and f(b) < f(c). Objectives may return +inf for undefined
// points; such points are never accepted. When the iteration budget runs
// out the best point so far is returned with converged = false.
BrentResult brent_minimize(const std::function<double(double)>& f, double a, double b,
                           double c, double tol, int max_iter);

// Expands from x = 0 with the given step until a three-point bracket with
// an interior minimum is found. Requires f(0) finite.
struct Bracket {
  double a, b, c;
  double fa, fb, fc;
  bool ok = false;
};
Bracket bracket_minimum(const std::function<double(double)>& f, double f0, double step);

struct PowellResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Powell's direction-set method with Brent line minimization and the
// standard direction-replacement test. The accepted value sequence is
// non-increasing and f(result) <= f(x0) always.
PowellResult powell_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const OptimizerConfig& config);

}  // namespace vtrack

#endif  // VTRACK_OPTIMIZER_HPP
