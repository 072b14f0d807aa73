// Resonance fluorescence: emission spectra and intensity correlations of
// the driven two-level system, their chaotic-drive averages, and the
// instrument responses applied before comparison with measurements.
#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <limits>
#include <vector>

#include "tlsim/core.hpp"

namespace tlsim::emission {

using cplx = std::complex<double>;

/// Uniform frequency grid in GHz relative to the emitter frequency.
struct FrequencyGrid {
    double start_ghz = -4.0;
    double step_ghz = 0.005;
    std::size_t count = 1601;

    static FrequencyGrid symmetric(double half_span_ghz, double step_ghz);
    double at(std::size_t i) const { return start_ghz + step_ghz * static_cast<double>(i); }
    double span() const { return step_ghz * static_cast<double>(count); }
};

/// Emission spectrum. Densities are photons per ns per GHz; the coherently
/// scattered (Rayleigh) line is a delta of weight coherent_weight at
/// coherent_freq_ghz, the laser frequency.
struct Spectrum {
    std::vector<double> freqs_ghz;
    std::vector<double> incoherent;
    double coherent_weight = 0.0;
    double coherent_freq_ghz = 0.0;
    /// Exact integral of the incoherent density over all frequencies.
    double incoherent_total = 0.0;
    /// Power moved outside the grid by an instrument convolution.
    double leaked_power = 0.0;

    double step() const { return freqs_ghz.size() > 1 ? freqs_ghz[1] - freqs_ghz[0] : 0.0; }
    /// Rectangle-rule integral of the density on the grid plus coherent_weight.
    double grid_power() const;
    /// incoherent_total + coherent_weight; the emission rate rho11/T1.
    double total_power() const { return incoherent_total + coherent_weight; }
};

/// Second-order correlation of the emitted light versus lag.
struct EmissionG2 {
    std::vector<double> lags_ns;
    std::vector<double> values;
    /// Lags beyond this are outside the model's validity domain.
    double valid_up_to_ns = std::numeric_limits<double>::infinity();
};

/// Bloch generator in the basis (<sigma->, <sigma+>, <sigma_z>):
/// d/dt y = M y + b.
struct BlochGenerator {
    std::array<std::array<cplx, 3>, 3> m{};
    std::array<cplx, 3> b{};

    static BlochGenerator make(const TlsParams& p, double omega, double detuning);
    std::array<cplx, 3> steady_state() const;
    /// Solves (s I - M) x = rhs.
    std::array<cplx, 3> resolve(cplx s, const std::array<cplx, 3>& rhs) const;
};

/// Incoherent spectrum from the quantum regression theorem: the Fourier
/// transform of <d sigma+(0) d sigma-(tau)> with the steady-state mean
/// removed, evaluated through the resolvent of the Bloch generator. Throws
/// GuardError if the grid step exceeds a tenth of the 2/T2 linewidth.
Spectrum qrt_spectrum(const TlsParams& p, double omega, double detuning,
                      const FrequencyGrid& grid);

/// qrt_spectrum averaged over Omega^2 ~ Exponential(mean_omega^2) with the
/// order-n exponential_average_rule (Gauss-Laguerre, graded near zero for
/// strong mean drive). The result at order 2n is returned; a
/// GuardError is thrown if it differs from order n by more than 1e-4
/// relative to the spectral peak.
Spectrum chaotic_spectrum(const TlsParams& p, double mean_omega, const FrequencyGrid& grid,
                          int order = 96, double detuning = 0.0, unsigned workers = 1);

/// Convolves with a unit-area Lorentzian of the given FWHM (GHz) and
/// materializes the coherent line. Uses cell-integrated kernel weights, so
/// grid power plus leaked_power equals the input grid power.
Spectrum convolve_lorentzian(const Spectrum& spec, double fwhm_ghz);

/// g2(tau) = rho11(|tau| | ground at 0) / rho11_ss from RK4 evolution under
/// constant drive. Requires omega > 0.
EmissionG2 qrt_g2(const TlsParams& p, double omega, double detuning,
                  const std::vector<double>& lags_ns);

/// Same quantity through the matrix exponential of the augmented generator.
EmissionG2 qrt_g2_expm(const TlsParams& p, double omega, double detuning,
                       const std::vector<double>& lags_ns);

/// Intensity-weighted average <I^2 g2_Omega(tau)> / <I>^2 over the chaotic
/// intensity law, I = steady-state population. Valid for lags much shorter
/// than tau_corr; valid_up_to_ns is set to tau_corr / 10.
EmissionG2 chaotic_g2(const TlsParams& p, double mean_omega, const std::vector<double>& lags_ns,
                      int order = 64, double tau_corr_ns = 901.8);

/// Multiplies by the on/off telegraph factor 1 + ((1 - beta)/beta) e^{-|tau|/tau_blink}.
EmissionG2 blinking_envelope(const EmissionG2& g2, double on_fraction, double tau_blink_ns);

/// Convolution with a unit-area Gaussian of the given FWHM (ns) on a
/// uniform lag grid; weights are renormalized near the grid ends.
EmissionG2 convolve_gaussian(const EmissionG2& g2, double fwhm_ns);

/// Uniform symmetric lag grid [-max, max] with the given step.
std::vector<double> symmetric_lags(double max_lag_ns, double step_ns);

/// CSV freq_ghz,incoherent,total_after_irf. `after_irf` must share the grid.
void write_spectrum_csv(std::ostream& out, const Spectrum& raw, const Spectrum& after_irf);
/// CSV lag_ns,g2.
void write_g2_csv(std::ostream& out, const EmissionG2& g2);

} // namespace tlsim::emission
