// Quadrature rules used for averages over chaotic intensity.
#pragma once

#include <functional>
#include <vector>

namespace tlsim {

/// Nodes and weights of an n-point Gauss-Laguerre rule for
/// integral_0^inf e^{-u} f(u) du. Weights that underflow are zero.
struct LaguerreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Cached; thread-safe. Throws GuardError for n outside [2, 400].
const LaguerreRule& gauss_laguerre(int n);

/// Rule for integral_0^inf e^{-u} f(u) du when f is analytic apart from a
/// pole near u = -1/scale. For scale <= 1 this is gauss_laguerre(n). For
/// larger scale, [0, 1] is covered by geometrically graded panels (finest
/// width 1/(20 scale)) of max(4, n/8)-point Gauss-Legendre rules and
/// [1, inf) by the shifted n-point Gauss-Laguerre rule. Doubling n refines
/// both parts.
LaguerreRule exponential_average_rule(double scale, int n);

/// Adaptive Gauss-Kronrod integration of f over [a, b].
/// Throws GuardError when the error estimate stays above tol (relative).
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-12);

} // namespace tlsim
