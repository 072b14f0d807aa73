#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tlsim/bloch.hpp"

using namespace tlsim;
using namespace tlsim::bloch;

namespace {

// Composite Simpson on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// E1(x) = int_0^1 e^{-x/u} / u du after t = x/u; the integrand vanishes
// smoothly at u = 0.
double exp1_oracle(double x) {
    return simpson([x](double u) { return u <= 0.0 ? 0.0 : std::exp(-x / u) / u; }, 0.0, 1.0, 200000);
}

} // namespace

TEST_CASE("E1 against independent quadrature and known values") {
    for (double x : {0.01, 0.3, 1.0, 1.5, 4.0, 12.0})
        CHECK(exp1(x) == doctest::Approx(exp1_oracle(x)).epsilon(1e-9));
    CHECK(exp1(1.0) == doctest::Approx(0.21938393439552029).epsilon(1e-14));
    // Large-x behaviour: e^x E1(x) ~ 1/x (1 - 1/x + 2/x^2).
    const double x = 1e4;
    CHECK(exp1_scaled(x) == doctest::Approx((1.0 - 1.0 / x + 2.0 / (x * x)) / x).epsilon(1e-11));
    CHECK(exp1_scaled(0.5) == doctest::Approx(std::exp(0.5) * exp1(0.5)).epsilon(1e-14));
}

TEST_CASE("steady state population") {
    const auto p = paper_qd();
    CHECK(population_from_saturation(1.0) == 0.25);
    CHECK(steady_state_population(p, omega_from_saturation(1.0, p)) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(steady_state_population(p, 0.0) == 0.0);
    double prev = 0.0;
    for (double s = 0.01; s < 1e3; s *= 1.5) {
        const double r = steady_state_population(p, omega_from_saturation(s, p));
        CHECK(r == doctest::Approx(s / (2.0 * (1.0 + s))));
        CHECK(r > prev);
        CHECK(r < 0.5);
        prev = r;
    }
    const double w = 5.0;
    CHECK(steady_state_population(p, w, 3.0) < steady_state_population(p, w, 0.0));
    CHECK(steady_state_population(p, w, 3.0) == doctest::Approx(steady_state_population(p, w, -3.0)));
    const auto ss = steady_state(p, w, 1.2);
    CHECK(ss.is_physical());
    const auto d = bloch_derivative(ss, p, w, 1.2);
    CHECK(std::abs(d.rho11) < 1e-12);
    CHECK(std::abs(d.rho01_re) < 1e-12);
    CHECK(std::abs(d.rho01_im) < 1e-12);
}

TEST_CASE("RK4 long-time limit equals steady state") {
    const auto p = paper_qd();
    for (double s : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        const double w = omega_from_saturation(s, p);
        const double dt = max_step(p, w);
        const auto tr = integrate(p, DrivePulse::cw(w), 30.0, dt);
        CHECK(std::abs(tr.samples.back().rho11 - steady_state_population(p, w)) < 1e-6);
    }
}

TEST_CASE("undamped Rabi oscillation") {
    const auto p = TlsParams::make(1e9, 2e9);
    const double w = 3.0;
    const auto tr = integrate(p, DrivePulse::cw(w), 5.0, 0.001);
    for (std::size_t i = 0; i < tr.samples.size(); i += 97) {
        const double t = tr.time(i);
        CHECK(std::abs(tr.samples[i].rho11 - std::pow(std::sin(w * t / 2.0), 2)) < 1e-8);
    }
}

TEST_CASE("free decay of an excited emitter") {
    const auto p = paper_qd();
    const auto tr = integrate(p, DrivePulse::cw(0.0), 2.0, 0.002, BlochState::excited());
    for (std::size_t i = 0; i < tr.samples.size(); i += 50)
        CHECK(tr.samples[i].rho11 == doctest::Approx(std::exp(-tr.time(i) / p.t1())).epsilon(1e-10));
}

TEST_CASE("integrator guard and envelope") {
    const auto p = paper_qd();
    CHECK(max_step(p, 0.0) == doctest::Approx(p.t2() / 50.0));
    CHECK(max_step(p, 100.0) == doctest::Approx(kTwoPi / 100.0 / 50.0));
    CHECK_THROWS_AS(integrate(p, DrivePulse::cw(7.2), 1.0, 0.1), GuardError);
    const auto tr = integrate(p, DrivePulse::square(7.2, 0.0, 2.0), 4.0, 0.002);
    for (const auto& s : tr.samples) CHECK(s.is_physical(1e-9));
    // After the pulse the population decays freely.
    const auto i1 = static_cast<std::size_t>(2.5 / 0.002);
    const auto i2 = static_cast<std::size_t>(3.5 / 0.002);
    CHECK(tr.samples[i2].rho11 / tr.samples[i1].rho11 == doctest::Approx(std::exp(-1.0 / p.t1())).epsilon(1e-3));
}

TEST_CASE("chaotic steady state") {
    const auto p = paper_qd();
    const double w1 = omega_from_saturation(1.0, p);
    CHECK(std::abs(chaotic_steady_state(p, w1) - 0.20183) < 1e-5);
    CHECK(chaotic_steady_state(p, 0.0) == 0.0);

    // Independent oracle: Simpson over u = Omega^2/mean in [0, 60].
    for (double s : {1e-4, 0.01, 0.3, 1.0, 10.8, 100.0}) {
        const double w = omega_from_saturation(s, p);
        auto f = [&](double u) { return std::exp(-u) * steady_state_population(p, w * std::sqrt(u)); };
        // The integrand varies on the scale 1/S near zero; grade the panels.
        double oracle = simpson(f, 1.0, 60.0, 60000);
        double hi = 1.0;
        while (hi > 1e-3 / s) {
            oracle += simpson(f, hi / 2.0, hi, 2000);
            hi /= 2.0;
        }
        oracle += simpson(f, 0.0, hi, 2000);
        CHECK(chaotic_steady_state(p, w) == doctest::Approx(oracle).epsilon(1e-8));
        CHECK(chaotic_steady_state_quadrature(p, w) == doctest::Approx(oracle).epsilon(1e-8));
        CHECK(chaotic_steady_state(p, w) < steady_state_population(p, w));
    }
    // Off resonance the closed form still matches quadrature.
    for (double det : {0.5, 3.0, -8.0}) {
        const double w = 6.0;
        CHECK(chaotic_steady_state(p, w, det) ==
              doctest::Approx(chaotic_steady_state_quadrature(p, w, det)).epsilon(1e-9));
    }
}

TEST_CASE("chaotic transient") {
    const auto p = paper_qd();
    TransientOptions opts;
    opts.t_end = 2.5;
    opts.n_samples = 400;
    const auto pulse = DrivePulse::square(7.2, 0.0, 2.0, Statistics::Chaotic);
    const auto a = chaotic_transient(p, pulse, opts, RngStream(5));
    opts.workers = 3;
    const auto b = chaotic_transient(p, pulse, opts, RngStream(5));
    REQUIRE(a.mean.samples.size() == b.mean.samples.size());
    for (std::size_t i = 0; i < a.mean.samples.size(); ++i) {
        CHECK(a.mean.samples[i].rho11 == b.mean.samples[i].rho11);
        CHECK(a.stderr_rho11[i] == b.stderr_rho11[i]);
    }
    // The late-pulse mean approaches the chaotic steady state.
    const auto i = static_cast<std::size_t>(1.9 / opts.dt);
    CHECK(std::abs(a.mean.samples[i].rho11 - chaotic_steady_state(p, 7.2)) < 4.0 * a.stderr_rho11[i] + 0.01);
    CHECK(a.warnings.empty());

    opts.n_samples = 10;
    CHECK_THROWS_AS(chaotic_transient(p, pulse, opts, RngStream(5)), ConfigError);

    opts.n_samples = 200;
    opts.tau_corr = 5.0;
    CHECK_FALSE(chaotic_transient(p, pulse, opts, RngStream(5)).warnings.empty());
}

TEST_CASE("trace csv") {
    const auto p = paper_qd();
    const auto tr = integrate(p, DrivePulse::cw(1.0), 0.01, 0.005);
    std::ostringstream os;
    write_trace_csv(os, tr);
    CHECK(os.str().rfind("t_ns,rho11,rho01_re,rho01_im\n0,0,0,0\n", 0) == 0);
}
