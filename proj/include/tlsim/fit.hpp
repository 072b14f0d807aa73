// Nonlinear least squares for the model fits used in correlation analysis.
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace tlsim {

struct FitResult {
    std::vector<double> params;
    std::vector<double> std_errors; // from s^2 (J^T J)^-1; NaN if singular
    double rms_residual = 0.0;
    bool converged = false;
};

using Model = std::function<double(double x, std::span<const double> params)>;

/// Levenberg-Marquardt (MINPACK, via Eigen) with a forward-difference
/// Jacobian. Requires xs.size() == ys.size() > initial.size().
FitResult least_squares(const Model& model, std::span<const double> xs, std::span<const double> ys,
                        std::vector<double> initial);

} // namespace tlsim
