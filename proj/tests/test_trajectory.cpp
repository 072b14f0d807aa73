#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tlsim/bloch.hpp"
#include "tlsim/emission.hpp"
#include "tlsim/trajectory.hpp"

using namespace tlsim;
using namespace tlsim::trajectory;

namespace {

TagStream poisson_stream(double rate, double duration, std::uint64_t seed) {
    RngStream rng(seed);
    TagStream s;
    s.duration = duration;
    for (std::uint8_t ch = 1; ch <= 2; ++ch) {
        RngStream r = rng.split(ch);
        for (double t = r.exponential() / rate; t <= duration; t += r.exponential() / rate) s.tags.push_back({t, ch});
    }
    std::sort(s.tags.begin(), s.tags.end(), [](const Tag& a, const Tag& b) { return a.time < b.time; });
    return s;
}

// Standard error of a rate estimated from a renewal process: the
// stationary count variance is approximated by the Poisson value scaled by
// the Fano factor (< 1 for an antibunched emitter), so the Poisson value
// is conservative.
double rate_se(std::size_t n, double duration) { return std::sqrt(static_cast<double>(n)) / duration; }

} // namespace

TEST_CASE("dark emitter emits nothing") {
    const auto p = paper_qd();
    TagOptions o;
    o.duration = 1e4;
    CHECK(simulate_tags(p, DrivePulse::cw(0.0), o, RngStream(1)).tags.empty());
}

TEST_CASE("emission rate matches the steady state") {
    const auto p = paper_qd();
    const double w = omega_from_saturation(0.6, p);
    TagOptions o;
    o.duration = 2e5;
    o.efficiency = 0.5;
    const auto s = simulate_tags(p, DrivePulse::cw(w), o, RngStream(2));
    const double expected = o.efficiency * bloch::steady_state_population(p, w) / p.t1();
    const double rate = static_cast<double>(s.tags.size()) / o.duration;
    CHECK(std::abs(rate - expected) < 3.0 * rate_se(s.tags.size(), o.duration));
    // Fair splitting.
    const double n1 = static_cast<double>(s.count(1));
    const double n2 = static_cast<double>(s.count(2));
    CHECK(std::abs(n1 - n2) < 4.0 * std::sqrt(n1 + n2));
    CHECK(std::is_sorted(s.tags.begin(), s.tags.end(), [](const Tag& a, const Tag& b) { return a.time < b.time; }));
    CHECK(s.tags.front().time >= 0.0);
    CHECK(s.tags.back().time <= o.duration);
}

TEST_CASE("dephasing unraveling reproduces the Bloch coherence") {
    // With strong dephasing the rate is sensitive to T2 through the steady state.
    const auto p = TlsParams::make(0.641, 0.1);
    const double w = omega_from_saturation(1.0, p);
    const auto times = simulate_emissions(p, DrivePulse::cw(w), 2e5, RngStream(3));
    const double expected = bloch::steady_state_population(p, w) / p.t1();
    const double rate = static_cast<double>(times.size()) / 2e5;
    CHECK(std::abs(rate - expected) < 3.0 * rate_se(times.size(), 2e5));
    // Detuned drive.
    DrivePulse det = DrivePulse::cw(w, 4.0);
    const auto td = simulate_emissions(p, det, 2e5, RngStream(4));
    const double exp_d = bloch::steady_state_population(p, w, 4.0) / p.t1();
    CHECK(std::abs(static_cast<double>(td.size()) / 2e5 - exp_d) < 3.0 * rate_se(td.size(), 2e5));
}

TEST_CASE("chaotic drive rate matches the chaotic steady state") {
    const auto p = paper_qd();
    const double w = omega_from_saturation(1.0, p);
    TagOptions o;
    o.duration = 2e6;
    o.tau_corr = 100.0;
    o.workers = 2;
    const auto s = simulate_tags(p, DrivePulse::cw(w, 0.0, Statistics::Chaotic), o, RngStream(5));
    const double expected = bloch::chaotic_steady_state(p, w) / p.t1();
    const double rate = static_cast<double>(s.tags.size()) / o.duration;
    // Block resampling adds variance: each block contributes one
    // independent intensity draw, so use the block count for the error.
    const double blocks = o.duration / o.tau_corr;
    const double per_block_sd = 0.5 / p.t1() * 0.6;
    CHECK(std::abs(rate - expected) < 3.0 * per_block_sd / std::sqrt(blocks) + 3.0 * rate_se(s.tags.size(), o.duration));
}

TEST_CASE("emissions are antibunched and strictly increasing") {
    const auto p = paper_qd();
    const auto t = simulate_emissions(p, DrivePulse::cw(omega_from_saturation(0.6, p)), 5e4, RngStream(6));
    REQUIRE(t.size() > 1000);
    std::size_t short_gaps = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        REQUIRE(t[i] > t[i - 1]);
        if (t[i] - t[i - 1] < 0.02) ++short_gaps;
    }
    // Waiting-time density vanishes quadratically at zero.
    CHECK(static_cast<double>(short_gaps) / static_cast<double>(t.size()) < 2e-3);
}

TEST_CASE("tag simulation is worker independent") {
    const auto p = paper_qd();
    TagOptions o;
    o.duration = 3e4;
    o.segment_length = 5e3;
    o.blinking = Blinking{};
    const auto pulse = DrivePulse::cw(3.0, 0.0, Statistics::Chaotic);
    const auto a = simulate_tags(p, pulse, o, RngStream(7));
    o.workers = 4;
    const auto b = simulate_tags(p, pulse, o, RngStream(7));
    std::ostringstream sa, sb;
    write_tags_csv(sa, a);
    write_tags_csv(sb, b);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("uncorrelated streams normalize to one") {
    const auto s = poisson_stream(0.5, 2e6, 8);
    const auto h = correlate(s, 1.0, 50.0);
    CHECK(h.lags.size() == 101);
    CHECK(h.lags[50] == 0.0);
    double mean = 0.0;
    for (double c : h.c_norm) {
        CHECK(std::abs(c - 1.0) < 0.02);
        mean += c;
    }
    CHECK(mean / static_cast<double>(h.c_norm.size()) == doctest::Approx(1.0).epsilon(0.005));
    const auto se = h.c_norm_stderr();
    CHECK(se[0] == doctest::Approx(1.0 / std::sqrt(static_cast<double>(h.counts[0]))).epsilon(0.05));
}

TEST_CASE("correlator counts pairs exactly") {
    TagStream s;
    s.duration = 100.0;
    s.tags = {{1.0, 1}, {1.4, 2}, {2.0, 2}, {3.0, 1}, {3.6, 2}};
    const auto h = correlate(s, 1.0, 5.0);
    // Differences t2 - t1: 0.4, 1.0, 2.6, -1.6, -1.0, 0.6.
    std::vector<std::uint64_t> expect(11, 0);
    for (double d : {0.4, 1.0, 2.6, -1.6, -1.0, 0.6}) ++expect[static_cast<std::size_t>(std::floor(d + 5.5))];
    CHECK(h.counts == expect);
    CHECK(h.c_norm[5] == doctest::Approx(1.0 / (2.0 * 3.0 * 1.0 / 100.0)));

    TagStream one;
    one.duration = 100.0;
    one.tags = {{1.0, 1}};
    CHECK_THROWS_AS(correlate(one, 1.0, 5.0), ConfigError);
    CHECK_THROWS_AS(correlate(s, 1.0, 20.0), ConfigError);
}

TEST_CASE("detector jitter") {
    const auto s = poisson_stream(0.01, 1e6, 9);
    CHECK(apply_detector(s, 0.0, RngStream(1)).tags.size() == s.tags.size());
    const auto zero = apply_detector(s, 0.0, RngStream(1));
    for (std::size_t i = 0; i < s.tags.size(); ++i) CHECK(zero.tags[i].time == s.tags[i].time);

    // Relative jitter between a tag pair copied to both channels has the pair FWHM.
    TagStream pairs;
    pairs.duration = 1e6;
    for (int i = 0; i < 20000; ++i) {
        pairs.tags.push_back({10.0 + 40.0 * i, 1});
        pairs.tags.push_back({10.0 + 40.0 * i, 2});
    }
    const auto j = apply_detector(pairs, 0.351, RngStream(2));
    const auto h = correlate(j, 0.01, 2.0);
    double m2 = 0.0, n = 0.0;
    for (std::size_t k = 0; k < h.lags.size(); ++k) {
        m2 += static_cast<double>(h.counts[k]) * h.lags[k] * h.lags[k];
        n += static_cast<double>(h.counts[k]);
    }
    CHECK(std::sqrt(m2 / n) * kGaussFwhmPerSigma == doctest::Approx(0.351).epsilon(0.03));

    // Jittered Poisson stream stays Poisson: KS distance of gaps.
    const auto jp = apply_detector(s, 0.351, RngStream(3));
    std::vector<double> gaps;
    double last = -1.0;
    for (const Tag& t : jp.tags) {
        if (t.channel != 1) continue;
        if (last >= 0.0) gaps.push_back(t.time - last);
        last = t.time;
    }
    std::sort(gaps.begin(), gaps.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const double cdf = 1.0 - std::exp(-0.01 * gaps[i]);
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i + 1) / static_cast<double>(gaps.size())));
    }
    CHECK(ks < 0.02);
}

TEST_CASE("dark counts and dead time") {
    TagStream empty;
    empty.duration = 1e6;
    DetectorOptions d;
    d.pair_jitter_fwhm = 0.0;
    d.dark_rate = 1e-3;
    const auto dark = apply_detector(empty, d, RngStream(4));
    CHECK(static_cast<double>(dark.count(1)) == doctest::Approx(1000.0).epsilon(0.15));
    d.dead_time = 5000.0;
    const auto dead = apply_detector(empty, d, RngStream(4));
    CHECK(dead.count(1) <= 201);
    for (std::size_t i = 1; i < dead.tags.size(); ++i) CHECK(dead.tags[i].time >= dead.tags[i - 1].time);
}

TEST_CASE("blinking recovered from tag correlations") {
    const auto p = paper_qd();
    TagOptions o;
    o.duration = 2e6;
    o.blinking = Blinking{0.5, 405.0};
    o.workers = 2;
    const auto s = simulate_tags(p, DrivePulse::cw(omega_from_saturation(0.6, p)), o, RngStream(10));
    const auto h = correlate(s, 20.0, 4000.0);
    const auto fit = fit_bidirectional_exponential(h, 20.0);
    CHECK(fit.converged);
    CHECK(fit.tau == doctest::Approx(405.0).epsilon(0.15));
    CHECK(fit.amplitude == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("tag csv round trip") {
    const auto s = poisson_stream(0.1, 1000.0, 11);
    std::stringstream io;
    write_tags_csv(io, s);
    const auto back = read_tags_csv(io, 1000.0);
    REQUIRE(back.tags.size() == s.tags.size());
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
        CHECK(back.tags[i].time == s.tags[i].time);
        CHECK(back.tags[i].channel == s.tags[i].channel);
    }
    std::istringstream bad("time_ns,channel\n1.0,3\n");
    CHECK_THROWS_AS(read_tags_csv(bad, 10.0), ConfigError);
    std::istringstream unsorted("time_ns,channel\n2.0,1\n1.0,2\n");
    CHECK_THROWS_AS(read_tags_csv(unsorted, 10.0), ConfigError);
}
