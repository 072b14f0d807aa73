#include "tlsim/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tlsim/core.hpp"

namespace tlsim {

namespace {

// L_n(x) and L_{n-1}(x) by the three-term recurrence.
std::pair<double, double> laguerre(int n, double x) {
    double prev = 1.0;
    double cur = 1.0 - x;
    if (n == 0) return {1.0, 0.0};
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return {cur, prev};
}

LaguerreRule build_rule(int n) {
    // Golub-Welsch on the Jacobi matrix, then Newton polish of each node.
    Eigen::VectorXd diag(n);
    Eigen::VectorXd sub(n - 1);
    for (int i = 0; i < n; ++i) diag[i] = 2.0 * i + 1.0;
    for (int i = 1; i < n; ++i) sub[i - 1] = static_cast<double>(i);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw GuardError("gauss_laguerre: eigensolver failed");

    LaguerreRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = solver.eigenvalues()[i];
        for (int it = 0; it < 8; ++it) {
            auto [ln, lm] = laguerre(n, x);
            const double deriv = n * (ln - lm) / x;
            if (!std::isfinite(deriv) || deriv == 0.0) break;
            const double dx = ln / deriv;
            x -= dx;
            if (std::abs(dx) <= 1e-15 * std::abs(x)) break;
        }
        const auto [ln1, _] = laguerre(n + 1, x);
        double w = x / ((n + 1.0) * (n + 1.0) * ln1 * ln1);
        if (!std::isfinite(w)) {
            const double v = solver.eigenvectors()(0, i);
            w = v * v;
        }
        rule.nodes[i] = x;
        rule.weights[i] = w;
    }
    return rule;
}

// Gauss-Legendre nodes and weights on [-1, 1] by Golub-Welsch.
LaguerreRule build_legendre(int m) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd sub(m - 1);
    for (int k = 1; k < m; ++k) sub[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw GuardError("gauss_legendre: eigensolver failed");
    LaguerreRule rule;
    for (int i = 0; i < m; ++i) {
        const double v = solver.eigenvectors()(0, i);
        rule.nodes.push_back(solver.eigenvalues()[i]);
        rule.weights.push_back(2.0 * v * v);
    }
    return rule;
}

} // namespace

LaguerreRule exponential_average_rule(double scale, int n) {
    const LaguerreRule& tail = gauss_laguerre(n);
    if (!(scale > 1.0)) return tail;
    LaguerreRule out;
    const auto panels = static_cast<int>(std::ceil(std::log2(20.0 * scale)));
    const LaguerreRule legendre = build_legendre(std::max(4, n / 8));
    double lo = 0.0;
    for (int j = 1; j <= panels; ++j) {
        const double hi = std::ldexp(1.0, j - panels);
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        for (std::size_t k = 0; k < legendre.nodes.size(); ++k) {
            const double u = mid + half * legendre.nodes[k];
            out.nodes.push_back(u);
            out.weights.push_back(legendre.weights[k] * half * std::exp(-u));
        }
        lo = hi;
    }
    const double shift = std::exp(-1.0);
    for (std::size_t k = 0; k < tail.nodes.size(); ++k) {
        out.nodes.push_back(1.0 + tail.nodes[k]);
        out.weights.push_back(shift * tail.weights[k]);
    }
    return out;
}

const LaguerreRule& gauss_laguerre(int n) {
    if (n < 2 || n > 400) throw GuardError("gauss_laguerre: order must lie in [2, 400]");
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<LaguerreRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<LaguerreRule>(build_rule(n));
    return *slot;
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol) {
    double err = 0.0;
    double l1 = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, tol, &err, &l1);
    if (!(err <= std::max(tol * l1, 1e-300) * 10.0))
        throw GuardError("adaptive quadrature did not reach tolerance (error estimate " +
                         std::to_string(err) + ")");
    return value;
}

} // namespace tlsim
