// Domain types and unit conventions shared by every tlsim module.
//
// Units: times in ns, angular frequencies in rad/ns. Quantities that the
// experiment reports as ordinary frequency (spectra, FPI resolution) are in
// GHz and carry a `_ghz` suffix; convert with to_ghz / from_ghz.
#pragma once

#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlsim {

/// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input (parameters, configuration, file contents).
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A numerical precondition (resolution, span, convergence) was violated.
class GuardError : public Error {
  public:
    using Error::Error;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// FWHM of a Gaussian in units of its standard deviation, 2*sqrt(2 ln 2).
inline constexpr double kGaussFwhmPerSigma = 2.3548200450309493;

constexpr double to_ghz(double angular_rad_per_ns) { return angular_rad_per_ns / kTwoPi; }
constexpr double from_ghz(double ghz) { return ghz * kTwoPi; }

/// Emitter lifetimes. Construct through make() or paper_qd(); the
/// constructor is private so an instance always satisfies t2 <= 2 t1.
class TlsParams {
  public:
    static TlsParams make(double t1_ns, double t2_ns);

    double t1() const { return t1_; }
    double t2() const { return t2_; }
    double gamma1() const { return 1.0 / t1_; }
    double gamma2() const { return 1.0 / t2_; }
    /// Pure-dephasing rate 1/T2 - 1/(2 T1), clamped at zero against rounding.
    double pure_dephasing() const;

  private:
    TlsParams(double t1, double t2) : t1_(t1), t2_(t2) {}
    double t1_;
    double t2_;
};

/// T1 = 641 ps, T2 = 325 ps.
TlsParams paper_qd();

enum class Statistics { Coherent, Chaotic };

std::string to_string(Statistics s);
Statistics statistics_from_string(const std::string& s);

struct EnvelopeSegment {
    double start;     // ns
    double stop;      // ns
    double amplitude; // relative to DrivePulse::rabi
};

/// Excitation field. An empty envelope means continuous-wave drive at
/// amplitude 1 for all t. For Chaotic statistics `rabi` is the rms Rabi
/// frequency, i.e. the coherent value with the same mean intensity.
struct DrivePulse {
    double rabi = 0.0;     // rad/ns
    double detuning = 0.0; // rad/ns
    std::vector<EnvelopeSegment> envelope;
    Statistics statistics = Statistics::Coherent;

    static DrivePulse cw(double rabi, double detuning = 0.0,
                         Statistics stats = Statistics::Coherent);
    static DrivePulse square(double rabi, double start, double stop,
                             Statistics stats = Statistics::Coherent);

    /// Throws ConfigError on negative rabi or overlapping/unsorted segments.
    void validate() const;
    /// Relative amplitude at time t (0 outside every segment).
    double amplitude_at(double t) const;
    double rabi_at(double t) const { return rabi * amplitude_at(t); }
    double peak_amplitude() const;
    /// Times at which the amplitude may change, ascending.
    std::vector<double> edges() const;
};

struct InstrumentResponse {
    double fpi_fwhm_ghz = 0.1754;
    double detector_fwhm_ns = 0.351;

    void validate() const;
};

/// A named parameter set as stored in a registry document.
struct ParameterSet {
    TlsParams tls = paper_qd();
    InstrumentResponse irf{};
};

/// Named parameter sets. Always contains "paper-qd"; more can be merged
/// from a JSON document of the form
///   { "<name>": { "t1_ns": .., "t2_ns": .., "fpi_fwhm_ghz": .., "detector_fwhm_ns": .. } }
/// fpi_fwhm_ghz and detector_fwhm_ns are optional and default to the
/// paper-qd instrument values.
class ParamRegistry {
  public:
    ParamRegistry();

    void load_json(const std::string& text);
    void load_file(const std::string& path);

    bool contains(const std::string& name) const { return sets_.contains(name); }
    const ParameterSet& get(const std::string& name) const;
    std::vector<std::string> names() const;

  private:
    std::map<std::string, ParameterSet> sets_;
};

double saturation_parameter(double omega, const TlsParams& p);
double omega_from_saturation(double s, const TlsParams& p);
/// Power-broadened FWHM (2/T2) sqrt(1 + S), rad/ns.
double power_linewidth(double omega, const TlsParams& p);

} // namespace tlsim
