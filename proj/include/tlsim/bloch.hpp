// Optical Bloch equations of a resonantly driven two-level system in the
// rotating frame:
//
//   d rho11/dt = Omega Im(rho01) - rho11/T1
//   d rho01/dt = -(i Delta + 1/T2) rho01 - i (Omega/2)(rho11 - rho00)
//
// together with steady states under coherent drive and averages over the
// exponential intensity law of chaotic drive.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tlsim/core.hpp"
#include "tlsim/rng.hpp"

namespace tlsim::bloch {

struct BlochState {
    double rho11 = 0.0;
    double rho01_re = 0.0;
    double rho01_im = 0.0;

    static BlochState ground() { return {}; }
    static BlochState excited() { return {1.0, 0.0, 0.0}; }

    /// Population in [0,1] and |rho01|^2 <= rho11 (1 - rho11) + tol.
    bool is_physical(double tol = 1e-9) const;
};

struct BlochTrace {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<BlochState> samples;

    double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
    std::vector<double> population() const;
};

BlochState bloch_derivative(const BlochState& s, const TlsParams& p, double omega_t,
                            double detuning);

/// Largest step accepted by integrate(): min(T2, 2 pi / Omega_peak) / 50.
double max_step(const TlsParams& p, double peak_omega);

/// Fixed-step RK4 from t = 0 to t_end, one sample per step. The drive is
/// evaluated at each step midpoint, so envelope edges snap to the nearest
/// grid point. Throws GuardError if dt exceeds max_step.
BlochTrace integrate(const TlsParams& p, const DrivePulse& pulse, double t_end, double dt,
                     const BlochState& initial = BlochState::ground());

/// As integrate(), but takes `substeps` RK4 steps of dt/substeps between
/// recorded samples. No step-size guard; callers pick substeps.
BlochTrace integrate_substepped(const TlsParams& p, const DrivePulse& pulse, double t_end,
                                double dt, int substeps, const BlochState& initial);

/// Closed-form steady state of the Bloch equations under constant drive.
BlochState steady_state(const TlsParams& p, double omega, double detuning = 0.0);

/// Steady-state excited population
/// (1/2) Omega^2 (T1/T2) / (Delta^2 + 1/T2^2 + Omega^2 T1/T2).
double steady_state_population(const TlsParams& p, double omega, double detuning = 0.0);

/// Resonant steady-state population in terms of the saturation parameter,
/// S / (2 (1 + S)).
double population_from_saturation(double s);

/// Exponential integral E1(x), x > 0.
double exp1(double x);
/// e^x E1(x); finite for large x where E1 underflows.
double exp1_scaled(double x);

/// Steady-state population averaged over the exponential distribution of
/// Omega^2 with mean mean_omega^2, in closed form via E1. Exact for any
/// detuning: detuning only rescales the effective saturation parameter.
double chaotic_steady_state(const TlsParams& p, double mean_omega, double detuning = 0.0);

/// Same average by adaptive Gauss-Kronrod quadrature over Omega^2 in
/// [0, 50 mean_omega^2], with a cutoff-doubling check (< 1e-9).
double chaotic_steady_state_quadrature(const TlsParams& p, double mean_omega,
                                       double detuning = 0.0);

struct TransientOptions {
    double t_end = 2.5;    // ns
    double dt = 0.005;     // sample spacing, ns
    std::size_t n_samples = 10000;
    double tau_corr = 901.8; // lamp correlation time, ns; used for the quasi-static check
    unsigned workers = 1;
};

struct EnsembleTrace {
    BlochTrace mean;
    std::vector<double> stderr_rho11;
    std::vector<std::string> warnings;
};

/// Pointwise ensemble mean of Bloch traces whose Rabi frequency is drawn
/// once per realization from the chaotic intensity law (quasi-static
/// field). Sample i uses rng.split(i); partial sums are reduced in fixed
/// chunk order so the result does not depend on opts.workers.
EnsembleTrace chaotic_transient(const TlsParams& p, const DrivePulse& pulse,
                                const TransientOptions& opts, const RngStream& rng);

/// CSV with header t_ns,rho11,rho01_re,rho01_im[,stderr].
void write_trace_csv(std::ostream& out, const BlochTrace& trace,
                     const std::vector<double>* stderr_rho11 = nullptr);

} // namespace tlsim::bloch
