// Synthetic pseudo-thermal (Martienssen lamp) light and its first- and
// second-order coherence estimators.
//
// The lamp is parameterized by the correlation time of the fit function
// g2(tau) = 1 + A exp(-pi (tau/tau_corr)^2), so the synthesized field has
// |g1(tau)|^2 = exp(-pi (tau/tau_corr)^2) and a Gaussian power spectrum of
// FWHM sqrt(2 ln 2 / pi) / tau_corr = 0.664 / tau_corr.
#pragma once

#include <complex>
#include <iosfwd>
#include <vector>

#include "tlsim/rng.hpp"

namespace tlsim::lamp {

struct FieldTrace {
    double dt = 1.0; // ns
    std::vector<std::complex<double>> amplitudes;

    std::vector<double> intensity() const;
    double duration() const { return dt * static_cast<double>(amplitudes.size()); }
};

struct CorrelationCurve {
    std::vector<double> lags_ns;
    std::vector<double> values;
};

/// Complex circular-Gaussian field with Gaussian spectrum: complex white
/// noise filtered in the frequency domain by exp(-pi tau_corr^2 f^2). The
/// first 5 tau_corr of the periodic realization are discarded and the
/// remaining n samples are scaled to unit mean intensity.
/// Requires dt <= tau_corr/20 and n dt >= 50 tau_corr.
FieldTrace synthesize_field(double tau_corr_ns, double dt_ns, std::size_t n, const RngStream& rng);

/// |g1(tau)| on lags 0, dt, ..., max_lag with the biased autocorrelation
/// estimator; |g1(0)| = 1. Requires max_lag <= duration/10.
CorrelationCurve estimate_g1(const FieldTrace& trace, double max_lag_ns);

/// <I(t) I(t+tau)> / <I>^2 on lags 0, dt, ..., max_lag, averaging each lag
/// over its N - k available pairs.
CorrelationCurve estimate_g2(const FieldTrace& trace, double max_lag_ns);

struct GaussianFit {
    double amplitude = 0.0;
    double tau_corr = 0.0;
    double amplitude_se = 0.0;
    double tau_corr_se = 0.0;
    double rms_residual = 0.0;
    bool converged = false;
    /// False when the bunching amplitude is indistinguishable from zero,
    /// in which case tau_corr carries no information.
    bool identifiable = false;
};

/// Least-squares fit of 1 + A exp(-pi (tau/tau_corr)^2) to the
/// non-negative lags of the curve. Throws GuardError if the curve does not
/// reach 3x the initial correlation-time guess.
GaussianFit fit_gaussian_g2(const CorrelationCurve& curve);

/// FWHM (GHz) of the segment-averaged periodogram of the field.
double spectral_fwhm_ghz(const FieldTrace& trace, std::size_t segment_length);

/// CSV t_ns,re,im,intensity.
void write_field_csv(std::ostream& out, const FieldTrace& trace, std::size_t stride = 1);
/// CSV lag_ns,value.
void write_correlation_csv(std::ostream& out, const CorrelationCurve& curve);

} // namespace tlsim::lamp
