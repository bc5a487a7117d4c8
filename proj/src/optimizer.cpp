#include "vtrack/optimizer.hpp"

#include <cmath>
#include <limits>

namespace vtrack {

namespace {

constexpr double kGolden = 1.618033988749895;
constexpr double kCGold = 0.3819660112501051;  // golden-section fraction
constexpr double kZEps = 1e-12;
constexpr double kTiny = 1e-25;

double sign_of(double magnitude, double sign) {
  return sign >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

}  // namespace

Bracket bracket_minimum(const std::function<double(double)>& f, double f0, double step) {
  Bracket br;
  br.a = 0.0;
  br.fa = f0;
  if (!std::isfinite(f0)) return br;

  double b = step;
  double fb = f(b);
  if (fb > f0) {
    const double f_pos = fb;
    b = -step;
    fb = f(b);
    if (fb > f0) {
      // Uphill both ways: 0 is already an interior minimum of the triple.
      br.a = -step;
      br.fa = fb;
      br.b = 0.0;
      br.fb = f0;
      br.c = step;
      br.fc = f_pos;
      br.ok = true;
      return br;
    }
  }

  double a = 0.0, fa = f0;
  double c = b + kGolden * (b - a);
  double fc = f(c);
  int guard = 0;
  while (fc < fb && guard++ < 64) {
    a = b;
    fa = fb;
    b = c;
    fb = fc;
    c = b + kGolden * (b - a);
    fc = f(c);
  }
  br.a = a;
  br.b = b;
  br.c = c;
  br.fa = fa;
  br.fb = fb;
  br.fc = fc;
  br.ok = fb <= fa && fb <= fc && std::isfinite(fb);
  return br;
}

BrentResult brent_minimize(const std::function<double(double)>& f, double ax, double bx,
                           double cx, double tol, int max_iter) {
  double a = std::min(ax, cx);
  double b = std::max(ax, cx);
  double x = bx, w = bx, v = bx;
  double fx = f(bx), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  for (int iter = 0; iter < max_iter; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = tol * std::abs(x) + kZEps + tol;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) {
      return {x, fx, true};
    }
    bool use_golden = true;
    if (std::abs(e) > tol1 && std::isfinite(fw) && std::isfinite(fv)) {
      // Parabolic fit through (x, w, v).
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::isfinite(p) && std::isfinite(q) &&
          std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = sign_of(tol1, xm - x);
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x >= xm) ? a - x : b - x;
      d = kCGold * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + sign_of(tol1, d);
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x;
      else b = x;
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x) a = u;
      else b = u;
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return {x, fx, false};
}

namespace {

// Minimizes f along x + t * dir starting at t = 0 where f equals fx.
// Never returns a value above fx.
void line_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                   Eigen::VectorXd& x, const Eigen::VectorXd& dir, double& fx,
                   const OptimizerConfig& config) {
  const auto g = [&](double t) { return f(x + t * dir); };
  const Bracket br = bracket_minimum(g, fx, config.bracket_step);
  if (!br.ok) return;
  const BrentResult res =
      brent_minimize(g, br.a, br.b, br.c, config.param_tolerance, 100);
  if (res.f <= fx) {
    x += res.x * dir;
    fx = res.f;
  }
}

}  // namespace

PowellResult powell_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const OptimizerConfig& config) {
  const int n = static_cast<int>(x0.size());
  PowellResult result;
  result.x = x0;
  result.f = f(x0);
  if (!std::isfinite(result.f)) {
    return result;  // undefined start: nothing to do, flagged non-converged
  }

  Eigen::MatrixXd dirs = Eigen::MatrixXd::Identity(n, n);

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    result.iterations = iter;
    const double f_start = result.f;
    const Eigen::VectorXd x_start = result.x;

    double biggest_drop = 0.0;
    int biggest_dir = 0;
    for (int i = 0; i < n; ++i) {
      const double f_before = result.f;
      line_minimize(f, result.x, dirs.col(i), result.f, config);
      if (f_before - result.f > biggest_drop) {
        biggest_drop = f_before - result.f;
        biggest_dir = i;
      }
    }

    if (2.0 * (f_start - result.f) <=
        config.value_tolerance * (std::abs(f_start) + std::abs(result.f)) + kTiny) {
      result.converged = true;
      return result;
    }
    if ((result.x - x_start).cwiseAbs().maxCoeff() < config.param_tolerance) {
      result.converged = true;
      return result;
    }

    // Powell's test for replacing the direction of largest decrease with the
    // overall sweep displacement.
    const Eigen::VectorXd displacement = result.x - x_start;
    const Eigen::VectorXd extrapolated = result.x + displacement;
    const double f_extrap = f(extrapolated);
    if (f_extrap < f_start) {
      const double df = f_start - result.f;
      const double t = 2.0 * (f_start - 2.0 * result.f + f_extrap) *
                           (df - biggest_drop) * (df - biggest_drop) -
                       biggest_drop * (f_start - f_extrap) * (f_start - f_extrap);
      if (t < 0.0) {
        Eigen::VectorXd new_dir = displacement;
        line_minimize(f, result.x, new_dir, result.f, config);
        dirs.col(biggest_dir) = dirs.col(n - 1);
        dirs.col(n - 1) = new_dir;
      }
    }
  }
  result.converged = false;
  return result;
}

}  // namespace vtrack
