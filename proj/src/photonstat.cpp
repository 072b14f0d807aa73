#include "tlsim/photonstat.hpp"

#include <cmath>

#include "tlsim/core.hpp"

namespace tlsim::photonstat {

namespace {

void check(const PhotonDistribution& d) {
    if (!(d.mean_n >= 0.0) || !std::isfinite(d.mean_n))
        throw ConfigError("photon distribution mean must be >= 0");
}

} // namespace

double pmf(const PhotonDistribution& dist, std::int64_t n) {
    check(dist);
    if (n < 0) throw ConfigError("photon number must be >= 0");
    const double m = dist.mean_n;
    const double k = static_cast<double>(n);
    if (m == 0.0) return n == 0 ? 1.0 : 0.0;
    switch (dist.kind) {
    case Kind::Poisson:
        return std::exp(k * std::log(m) - m - std::lgamma(k + 1.0));
    case Kind::BoseEinstein:
        // m^n / (1+m)^(n+1) = (m/(1+m))^n / (1+m)
        return std::exp(k * std::log(m / (1.0 + m)) - std::log1p(m));
    }
    return 0.0;
}

double number_variance(const PhotonDistribution& dist) {
    check(dist);
    const double m = dist.mean_n;
    return dist.kind == Kind::Poisson ? m : m + m * m;
}

double number_std(const PhotonDistribution& dist) { return std::sqrt(number_variance(dist)); }

std::int64_t support_cutoff(const PhotonDistribution& dist, double tail) {
    check(dist);
    double mass = 0.0;
    std::int64_t n = 0;
    for (;; ++n) {
        mass += pmf(dist, n);
        if (mass >= 1.0 - tail && static_cast<double>(n) >= dist.mean_n) return n;
        if (n > 100000000) throw GuardError("support_cutoff: no convergence");
    }
}

double g2_from_g1(double g1_abs) {
    if (!(g1_abs >= 0.0 && g1_abs <= 1.0))
        throw ConfigError("|g1| must lie in [0, 1]");
    return 1.0 + g1_abs * g1_abs;
}

double sample_chaotic_intensity(RngStream& rng, double mean_omega_sq) {
    if (!(mean_omega_sq >= 0.0)) throw ConfigError("mean squared Rabi frequency must be >= 0");
    if (mean_omega_sq == 0.0) return 0.0;
    return mean_omega_sq * rng.exponential();
}

} // namespace tlsim::photonstat
