// Photon-number statistics of the excitation light.
#pragma once

#include <cstdint>

#include "tlsim/rng.hpp"

namespace tlsim::photonstat {

enum class Kind { Poisson, BoseEinstein };

struct PhotonDistribution {
    Kind kind = Kind::Poisson;
    double mean_n = 0.0;
};

/// Probability of observing n photons. Poisson is evaluated in log space so
/// large means (hundreds of photons) stay finite. Throws ConfigError on
/// negative n or mean.
double pmf(const PhotonDistribution& dist, std::int64_t n);

double number_variance(const PhotonDistribution& dist);
double number_std(const PhotonDistribution& dist);

/// Smallest n_cut such that the pmf mass on [0, n_cut] is >= 1 - tail.
std::int64_t support_cutoff(const PhotonDistribution& dist, double tail = 1e-12);

/// Siegert relation g2 = 1 + |g1|^2 for chaotic light.
double g2_from_g1(double g1_abs);

/// Draw a squared Rabi frequency from the exponential law of a chaotic
/// field with mean mean_omega_sq.
double sample_chaotic_intensity(RngStream& rng, double mean_omega_sq);

} // namespace tlsim::photonstat
