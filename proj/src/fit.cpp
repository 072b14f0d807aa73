#include "tlsim/fit.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "tlsim/core.hpp"

namespace tlsim {

namespace {

struct Residuals {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const Model* model;
    std::span<const double> xs;
    std::span<const double> ys;
    int n_params;

    int inputs() const { return n_params; }
    int values() const { return static_cast<int>(xs.size()); }

    int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
        const std::span<const double> view(p.data(), static_cast<std::size_t>(p.size()));
        for (std::size_t i = 0; i < xs.size(); ++i) r[static_cast<Eigen::Index>(i)] = (*model)(xs[i], view) - ys[i];
        return 0;
    }
};

} // namespace

FitResult least_squares(const Model& model, std::span<const double> xs, std::span<const double> ys,
                        std::vector<double> initial) {
    if (xs.size() != ys.size() || xs.size() <= initial.size())
        throw ConfigError("least_squares: need more data points than parameters");
    const int np = static_cast<int>(initial.size());
    Residuals fn{&model, xs, ys, np};
    Eigen::NumericalDiff<Residuals> diff(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residuals>, double> lm(diff);
    lm.parameters.maxfev = 4000;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-14;

    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(initial.data(), np);
    const auto status = lm.minimize(p);

    FitResult out;
    out.params.assign(p.data(), p.data() + np);
    out.converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::XtolTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::FtolTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::GtolTooSmall;

    const auto m = static_cast<Eigen::Index>(xs.size());
    Eigen::VectorXd r(m);
    fn(p, r);
    const double ssr = r.squaredNorm();
    out.rms_residual = std::sqrt(ssr / static_cast<double>(m));

    Eigen::MatrixXd jac(m, np);
    diff.df(p, jac);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    out.std_errors.assign(np, std::numeric_limits<double>::quiet_NaN());
    if (lu.isInvertible()) {
        const double s2 = ssr / static_cast<double>(m - np);
        const Eigen::MatrixXd cov = lu.inverse() * s2;
        for (int k = 0; k < np; ++k) out.std_errors[k] = std::sqrt(std::max(0.0, cov(k, k)));
    }
    return out;
}

} // namespace tlsim
