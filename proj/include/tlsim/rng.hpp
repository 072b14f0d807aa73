// Counter-based random stream.
//
// Each draw is a pure function of (key, counter), so a stream is a small
// value that can be copied, split by index and replayed. The mixing
// function is the SplitMix64 finalizer applied to a Weyl sequence, keyed
// per stream.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace tlsim {

class RngStream {
  public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + kWeyl * ++counter_); }

    /// Independent child stream. Depends only on this stream's key and the
    /// index, not on how many values have been drawn.
    RngStream split(std::uint64_t index) const {
        RngStream child;
        child.key_ = mix(key_ ^ mix(index + 0x9e3779b97f4a7c15ULL));
        return child;
    }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    /// Exponential with unit mean.
    double exponential() { return -std::log(uniform()); }

    /// Standard normal (Box-Muller; the second variate is discarded so the
    /// stream position stays a simple function of the number of draws).
    double normal() {
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        return r * std::cos(6.283185307179586 * uniform());
    }

    std::uint64_t counter() const { return counter_; }

  private:
    static constexpr std::uint64_t kWeyl = 0x9e3779b97f4a7c15ULL;

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace tlsim
