// Photon time tags from quantum-jump trajectories of the driven emitter,
// detector effects, and the start-stop coincidence correlator of an HBT
// setup.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tlsim/core.hpp"
#include "tlsim/rng.hpp"

namespace tlsim::trajectory {

struct Tag {
    double time;         // ns
    std::uint8_t channel; // 1 or 2
};

struct TagStream {
    std::vector<Tag> tags; // ascending in time, all within [0, duration]
    double duration = 0.0;

    std::size_t count(int channel) const;
};

/// Two-state on/off telegraph gating of the emission.
struct Blinking {
    double on_fraction = 0.5;
    double tau_blink = 405.0; // ns, correlation time of the telegraph
};

struct TagOptions {
    double duration = 1e6;    // ns
    double efficiency = 1.0;  // overall detection probability per emitted photon
    std::optional<Blinking> blinking;
    /// Block length for quasi-static resampling of Omega^2 under chaotic drive.
    double tau_corr = 901.8;
    /// Trajectories are simulated in independent segments of this length,
    /// each preceded by a discarded burn-in from the ground state.
    double segment_length = 1e5;
    double burn_in = 20.0;
    unsigned workers = 1;
};

/// Quantum-jump unraveling: radiative jumps at rate 1/T1 reset the emitter
/// to the ground state and emit a photon; pure dephasing is unraveled as
/// sigma_z phase flips, a Poisson process of rate gamma_phi / 2 that yields
/// coherence decay gamma_phi. Emitted photons are kept with probability
/// `efficiency`, dropped while a blinking emitter is off, and sent to
/// channel 1 or 2 with equal probability.
TagStream simulate_tags(const TlsParams& p, const DrivePulse& pulse, const TagOptions& opts,
                        const RngStream& rng);

/// Emission times (before thinning and channel assignment) of a single
/// unbroken trajectory from the ground state; for tests and diagnostics.
std::vector<double> simulate_emissions(const TlsParams& p, const DrivePulse& pulse, double duration,
                                       const RngStream& rng);

struct DetectorOptions {
    /// FWHM of the two-detector relative timing response. Each detector
    /// gets independent Gaussian jitter of FWHM pair_jitter_fwhm / sqrt(2).
    double pair_jitter_fwhm = 0.351; // ns
    double dark_rate = 0.0;           // counts per ns per channel
    double dead_time = 0.0;           // ns, per channel
};

/// Applies jitter (then re-sorts and drops tags pushed outside [0, T]),
/// adds dark counts and enforces dead time.
TagStream apply_detector(const TagStream& stream, const DetectorOptions& det, const RngStream& rng);
inline TagStream apply_detector(const TagStream& stream, double pair_jitter_fwhm, const RngStream& rng) {
    return apply_detector(stream, DetectorOptions{pair_jitter_fwhm, 0.0, 0.0}, rng);
}

struct CoincidenceHistogram {
    double bin_width = 0.0;
    double max_lag = 0.0;
    std::vector<double> lags;             // bin centers, k * bin_width
    std::vector<std::uint64_t> counts;    // c(tau)
    std::vector<double> c_norm;           // C_N(tau)
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    double duration = 0.0;

    /// Poisson standard error of c_norm; empty bins use one count.
    std::vector<double> c_norm_stderr() const;
};

/// Start-stop histogram of channel-2 arrivals relative to channel-1
/// arrivals over [-max_lag, max_lag], normalized as
/// C_N = c / (R1 R2 w T) with count rates R_i = N_i / T.
/// Throws ConfigError if either channel is empty.
CoincidenceHistogram correlate(const TagStream& stream, double bin_width, double max_lag);

struct ExponentialFit {
    double baseline = 1.0;
    double amplitude = 0.0;
    double tau = 0.0;
    double tau_se = 0.0;
    bool converged = false;
};

/// Fits baseline + amplitude exp(-|tau| / t) to bins with |tau| >= min_abs_lag.
ExponentialFit fit_bidirectional_exponential(const CoincidenceHistogram& hist, double min_abs_lag);

/// CSV time_ns,channel.
void write_tags_csv(std::ostream& out, const TagStream& stream);
/// Parses the CSV written by write_tags_csv; duration comes from the sidecar.
TagStream read_tags_csv(std::istream& in, double duration);
/// CSV lag_ns,counts,c_norm.
void write_histogram_csv(std::ostream& out, const CoincidenceHistogram& hist);

} // namespace tlsim::trajectory
