#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>

#include "tlsim/bloch.hpp"
#include "tlsim/emission.hpp"

using namespace tlsim;
using namespace tlsim::emission;

namespace {

// Exact resonance-fluorescence spectrum of a purely radiative emitter
// (T2 = 2 T1) on resonance, per GHz:
//   S(nu) = (2/T1) Re X(-i w),  w = 2 pi nu,
//   X(s) = 4 W^4 (2 s^2 + 4 G s + 2 G^2 + W^2) / [(G + 2 s)(G^2 + 2 W^2)^2 (2 s^2 + 3 G s + G^2 + 2 W^2)]
// with poles at -G/2 and -3G/4 +- i sqrt(W^2 - G^2/16).
double mollow_exact(double t1, double omega, double nu) {
    using c = std::complex<double>;
    const double g = 1.0 / t1;
    const c s(0.0, -kTwoPi * nu);
    const double w2 = omega * omega;
    const c num = 4.0 * w2 * w2 * (2.0 * s * s + 4.0 * g * s + 2.0 * g * g + w2);
    const c den = (g + 2.0 * s) * std::pow(g * g + 2.0 * w2, 2) * (2.0 * s * s + 3.0 * g * s + g * g + 2.0 * w2);
    return 2.0 * g * (num / den).real();
}

std::vector<std::size_t> local_maxima(const std::vector<double>& v) {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i)
        if (v[i] > v[i - 1] && v[i] >= v[i + 1]) out.push_back(i);
    return out;
}

} // namespace

TEST_CASE("generator steady state agrees with the Bloch closed form") {
    const auto p = paper_qd();
    for (double det : {0.0, 2.0}) {
        const auto gen = BlochGenerator::make(p, 5.0, det);
        const auto y = gen.steady_state();
        const auto ref = bloch::steady_state(p, 5.0, det);
        CHECK(0.5 * (y[2].real() + 1.0) == doctest::Approx(ref.rho11).epsilon(1e-12));
        CHECK(std::abs(y[1] - std::conj(y[0])) < 1e-12);
        CHECK(std::abs(y[1] - std::complex<double>(ref.rho01_re, ref.rho01_im)) < 1e-12);
    }
}

TEST_CASE("radiative spectrum equals the exact Mollow formula") {
    const auto p = TlsParams::make(0.641, 1.282);
    for (double omega : {1.0, 7.2, 20.0}) {
        const auto grid = FrequencyGrid::symmetric(12.0, 0.01);
        const auto s = qrt_spectrum(p, omega, 0.0, grid);
        double err = 0.0, norm = 0.0;
        for (std::size_t k = 0; k < grid.count; ++k) {
            const double ref = mollow_exact(p.t1(), omega, s.freqs_ghz[k]);
            err += (s.incoherent[k] - ref) * (s.incoherent[k] - ref);
            norm += ref * ref;
        }
        CHECK(std::sqrt(err / norm) < 1e-10);
    }
}

TEST_CASE("spectrum power, symmetry and non-negativity") {
    const auto p = paper_qd();
    for (double omega : {0.5, 1.7, 7.2}) {
        const auto grid = FrequencyGrid::symmetric(400.0, 0.04);
        const auto s = qrt_spectrum(p, omega, 0.0, grid);
        const double rate = bloch::steady_state_population(p, omega) / p.t1();
        CHECK(s.total_power() == doctest::Approx(rate).epsilon(1e-12));
        // The density falls as 1/nu^2; add the analytic tail beyond the grid.
        const double edge = s.freqs_ghz.back();
        const double tail = 2.0 * s.incoherent.back() * edge;
        CHECK(std::abs(s.grid_power() + tail - rate) < 1e-6);
        for (std::size_t k = 0; k < grid.count; ++k) {
            CHECK(s.incoherent[k] >= 0.0);
            const double mirror = s.incoherent[grid.count - 1 - k];
            CHECK(std::abs(s.incoherent[k] - mirror) <= 1e-8 * std::max(s.incoherent[k], 1e-30));
        }
    }
}

TEST_CASE("weak drive is Rayleigh dominated for a radiatively limited emitter") {
    const auto rad = TlsParams::make(0.641, 1.282);
    const double w = omega_from_saturation(0.01, rad);
    const auto s = qrt_spectrum(rad, w, 0.0, FrequencyGrid::symmetric(5.0, 0.01));
    CHECK(s.coherent_weight / s.total_power() >= 0.9);
    // With pure dephasing the coherent fraction is T2 / (2 T1 (1 + S)).
    const auto p = paper_qd();
    const double wp = omega_from_saturation(0.01, p);
    const auto sp = qrt_spectrum(p, wp, 0.0, FrequencyGrid::symmetric(5.0, 0.01));
    CHECK(sp.coherent_weight / sp.total_power() == doctest::Approx(p.t2() / (2.0 * p.t1() * 1.01)).epsilon(1e-10));
}

TEST_CASE("spectral grid guard") {
    const auto p = paper_qd();
    CHECK_THROWS_AS(qrt_spectrum(p, 7.2, 0.0, FrequencyGrid::symmetric(4.0, 0.2)), GuardError);
    CHECK_THROWS_AS(qrt_spectrum(p, -1.0, 0.0, FrequencyGrid::symmetric(4.0, 0.01)), ConfigError);
}

TEST_CASE("coherent spectrum at strong drive has three maxima") {
    const auto p = paper_qd();
    const auto s = qrt_spectrum(p, 7.2, 0.0, FrequencyGrid::symmetric(4.0, 0.005));
    const auto peaks = local_maxima(s.incoherent);
    REQUIRE(peaks.size() == 3);
    CHECK(s.freqs_ghz[peaks[1]] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.freqs_ghz[peaks[2]] == doctest::Approx(-s.freqs_ghz[peaks[0]]));
}

TEST_CASE("chaotic spectrum") {
    const auto p = paper_qd();
    const auto grid = FrequencyGrid::symmetric(4.0, 0.01);
    const auto c = chaotic_spectrum(p, 7.2, grid);
    CHECK(c.total_power() == doctest::Approx(bloch::chaotic_steady_state(p, 7.2) / p.t1()).epsilon(1e-4));
    const auto conv = convolve_lorentzian(c, 0.1754);
    CHECK(local_maxima(conv.incoherent).size() == 1);
    for (std::size_t k = 0; k < c.incoherent.size(); ++k)
        if (std::abs(c.freqs_ghz[k]) >= 0.25 && k > 0 && k + 1 < c.incoherent.size())
            CHECK_FALSE((c.incoherent[k] > c.incoherent[k - 1] && c.incoherent[k] >= c.incoherent[k + 1]));

    const auto zero = chaotic_spectrum(p, 0.0, grid);
    const auto coh0 = qrt_spectrum(p, 0.0, 0.0, grid);
    CHECK(zero.total_power() == coh0.total_power());

    // Weak mean drive approaches the coherent weak-drive spectrum shape.
    const auto wc = chaotic_spectrum(p, 1e-3, grid);
    const auto wq = qrt_spectrum(p, 1e-3, 0.0, grid);
    CHECK(wc.coherent_weight / wc.total_power() == doctest::Approx(wq.coherent_weight / wq.total_power()).epsilon(1e-5));
}

TEST_CASE("chaotic spectrum is worker independent") {
    const auto p = paper_qd();
    const auto grid = FrequencyGrid::symmetric(3.0, 0.02);
    const auto a = chaotic_spectrum(p, 6.6, grid, 96, 0.0, 1);
    const auto b = chaotic_spectrum(p, 6.6, grid, 96, 0.0, 4);
    CHECK(a.incoherent == b.incoherent);
    CHECK(a.coherent_weight == b.coherent_weight);
}

TEST_CASE("lorentzian convolution") {
    Spectrum delta;
    const auto grid = FrequencyGrid::symmetric(20.0, 0.005);
    for (std::size_t k = 0; k < grid.count; ++k) delta.freqs_ghz.push_back(grid.at(k));
    delta.incoherent.assign(grid.count, 0.0);
    delta.coherent_weight = 1.0;

    const auto out = convolve_lorentzian(delta, 0.1754);
    CHECK(out.grid_power() + out.leaked_power == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.total_power() == doctest::Approx(1.0));
    // FWHM of the materialized line.
    const auto peak = static_cast<std::size_t>(std::max_element(out.incoherent.begin(), out.incoherent.end()) -
                                               out.incoherent.begin());
    std::size_t k = peak;
    while (out.incoherent[k] > out.incoherent[peak] / 2.0) ++k;
    const double frac = (out.incoherent[k - 1] - out.incoherent[peak] / 2.0) / (out.incoherent[k - 1] - out.incoherent[k]);
    const double half = out.freqs_ghz[k - 1] + frac * grid.step_ghz - out.freqs_ghz[peak];
    CHECK(2.0 * half == doctest::Approx(0.1754).epsilon(1e-3));

    // Two symmetric lines stay resolved and equal.
    Spectrum two = delta;
    two.coherent_weight = 0.0;
    const std::size_t a = grid.count / 2 - 200, b = grid.count / 2 + 200;
    two.incoherent[a] = two.incoherent[b] = 1.0 / grid.step_ghz;
    const auto two_out = convolve_lorentzian(two, 0.1754);
    const auto peaks = local_maxima(two_out.incoherent);
    REQUIRE(peaks.size() == 2);
    CHECK(two_out.incoherent[peaks[0]] == doctest::Approx(two_out.incoherent[peaks[1]]).epsilon(1e-12));

    // Zero width is the identity.
    const auto p = paper_qd();
    const auto s = qrt_spectrum(p, 3.0, 0.0, FrequencyGrid::symmetric(4.0, 0.01));
    auto s_inc = s;
    s_inc.coherent_weight = 0.0;
    CHECK(convolve_lorentzian(s_inc, 0.0).incoherent == s.incoherent);

    CHECK_THROWS_AS(convolve_lorentzian(s, 2.0), GuardError);
}

TEST_CASE("emission g2: RK4 against matrix exponential") {
    const auto p = paper_qd();
    const auto lags = symmetric_lags(5.0, 0.01);
    for (double omega : {0.1, 1.7, 7.1}) {
        const auto a = qrt_g2(p, omega, 0.0, lags);
        const auto b = qrt_g2_expm(p, omega, 0.0, lags);
        for (std::size_t k = 0; k < lags.size(); ++k) {
            CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-7));
            CHECK(a.values[k] >= 0.0);
        }
        CHECK(a.values[lags.size() / 2] == 0.0);
        CHECK(std::abs(qrt_g2(p, omega, 0.0, {30.0}).values[0] - 1.0) < 1e-4);
    }
    const auto det = qrt_g2(p, 4.0, 2.5, {0.3, 1.0});
    const auto det_e = qrt_g2_expm(p, 4.0, 2.5, {0.3, 1.0});
    CHECK(det.values[0] == doctest::Approx(det_e.values[0]).epsilon(1e-7));
}

TEST_CASE("emission g2: weak-drive radiative limit") {
    // Without pure dephasing the weak-drive law is (1 - e^{-tau/2T1})^2.
    const auto rad = TlsParams::make(0.641, 1.282);
    const double w = omega_from_saturation(1e-4, rad);
    const auto g = qrt_g2_expm(rad, w, 0.0, {0.2, 0.64, 2.0});
    for (std::size_t k = 0; k < 3; ++k) {
        const double t = g.lags_ns[k];
        CHECK(g.values[k] == doctest::Approx(std::pow(1.0 - std::exp(-t / (2.0 * rad.t1())), 2)).epsilon(1e-3));
    }
    // Strong dephasing recovers 1 - e^{-tau/T1}.
    const auto deph = TlsParams::make(0.641, 0.005);
    const double wd = omega_from_saturation(0.01, deph);
    const auto gd = qrt_g2_expm(deph, wd, 0.0, {0.3, 1.0, 2.0});
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::abs(gd.values[k] - (1.0 - std::exp(-gd.lags_ns[k] / deph.t1()))) < 1e-2);
}

TEST_CASE("emission g2 shows Rabi oscillation at strong drive") {
    const auto p = paper_qd();
    std::vector<double> lags;
    for (double t = 0.0; t <= 4.0; t += 0.005) lags.push_back(t);
    const auto g = qrt_g2(p, 7.1, 0.0, lags);
    const auto peaks = local_maxima(g.values);
    REQUIRE_FALSE(peaks.empty());
    CHECK(g.values[peaks.front()] > 1.0);
}

TEST_CASE("chaotic g2") {
    const auto p = paper_qd();
    // Saturated intensity barely fluctuates: plateau <I^2>/<I>^2 = 1.00097 at S = 1000.
    const std::vector<double> lags{0.0, 30 * 0.641};
    const auto strong = chaotic_g2(p, omega_from_saturation(1e3, p), lags);
    CHECK(strong.values[0] == 0.0);
    CHECK(std::abs(strong.values[1] - 1.00097) < 1e-4);
    CHECK(strong.valid_up_to_ns == doctest::Approx(90.18));

    // Independent oracle: Simpson over u = Omega^2 / mean.
    const double mean = omega_from_saturation(0.3, p);
    const double tau = 2.0;
    auto pop = [&](double u) { return bloch::steady_state_population(p, mean * std::sqrt(u)); };
    auto cond = [&](double u) {
        const double w = mean * std::sqrt(u);
        return w == 0.0 ? 0.0 : qrt_g2_expm(p, w, 0.0, {tau}).values[0] * pop(u) * pop(u);
    };
    const int n = 4000;
    const double h = 40.0 / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double u = i * h;
        const double c = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        num += c * std::exp(-u) * cond(u);
        den += c * std::exp(-u) * pop(u);
    }
    num *= h / 3.0;
    den *= h / 3.0;
    CHECK(chaotic_g2(p, mean, {tau}).values[0] == doctest::Approx(num / (den * den)).epsilon(1e-6));
}

TEST_CASE("blinking envelope") {
    EmissionG2 flat{{-1000.0, 0.0, 1e5}, {1.0, 1.0, 1.0}};
    CHECK(blinking_envelope(flat, 1.0, 405.0).values == flat.values);
    const auto b = blinking_envelope(flat, 0.5, 405.0);
    CHECK(b.values[1] == 2.0);
    CHECK(b.values[0] == doctest::Approx(1.0 + std::exp(-1000.0 / 405.0)));
    CHECK(b.values[2] == doctest::Approx(1.0));
    CHECK_THROWS_AS(blinking_envelope(flat, 0.0, 405.0), ConfigError);
}

TEST_CASE("gaussian convolution") {
    const auto lags = symmetric_lags(10.0, 0.01);
    EmissionG2 one{lags, std::vector<double>(lags.size(), 1.0)};
    for (double v : convolve_gaussian(one, 0.351).values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(convolve_gaussian(one, 0.0).values == one.values);

    const auto p = paper_qd();
    EmissionG2 dip{lags, {}};
    for (double t : lags) dip.values.push_back(1.0 - std::exp(-std::abs(t) / p.t1()));
    const auto c = convolve_gaussian(dip, 0.351);
    const std::size_t mid = lags.size() / 2;
    CHECK(c.values[mid] > 0.0);
    CHECK(c.values[mid] < 0.5);
    for (std::size_t k = 0; k < lags.size(); ++k) CHECK(c.values[k] == doctest::Approx(c.values[lags.size() - 1 - k]));

    const auto coarse = symmetric_lags(10.0, 0.1);
    CHECK_THROWS_AS(convolve_gaussian(EmissionG2{coarse, std::vector<double>(coarse.size(), 1.0)}, 0.351), GuardError);
}

TEST_CASE("csv output") {
    const auto p = paper_qd();
    const auto s = qrt_spectrum(p, 1.0, 0.0, FrequencyGrid::symmetric(2.0, 0.05));
    const auto conv = convolve_lorentzian(s, 0.1754);
    std::ostringstream os;
    write_spectrum_csv(os, s, conv);
    CHECK(os.str().rfind("freq_ghz,incoherent,total_after_irf\n", 0) == 0);
    std::ostringstream g;
    write_g2_csv(g, qrt_g2(p, 1.0, 0.0, {0.0, 1.0}));
    CHECK(g.str().rfind("lag_ns,g2\n0,0\n1,", 0) == 0);
}
