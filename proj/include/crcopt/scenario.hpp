// Scenario construction and quasi-static channel modelling for a
// rate-splitting downlink sharing spectrum with monostatic radars.
//
// A Scenario collects the radio parameters (already converted to linear
// units and watts), a Geometry places the base station, users, radars and
// the tracked target, and compute_channels evaluates every path gain plus
// the normalized coefficients used by the linear radar-protection
// constraints. Everything is a pure value type; instances are safe to share
// across concurrent solver runs.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace crcopt {

struct ConfigError : std::runtime_error {
  enum class Kind { MissingKey, NonPositiveQuantity, UnknownFadingMode, BadValue };
  ConfigError(Kind k, const std::string& message) : std::runtime_error(message), kind(k) {}
  Kind kind;
};

enum class FadingMode {
  DeterministicUnit,  // all small-scale factors equal one
  Rayleigh,           // unit-mean exponential power factors, seeded
};

struct Scenario {
  double wavelength_m = 0.1;
  double bandwidth_hz = 1e6;
  double bs_power_budget_w = 1.0;          // 30 dBm
  double radar_power_budget_w = 1000.0;
  double radar_sinr_threshold = 10.0;      // linear, 10 dB
  double min_rate_bps = 1e5;               // 0.1 Mb/s per user
  double bs_tx_gain = 50.11872336272722;   // 17 dBi
  double cu_rx_gain = 1.0;                 // 0 dBi
  double radar_mainlobe_tx_gain = 1000.0;  // 30 dBi
  double radar_mainlobe_rx_gain = 1000.0;
  double radar_sidelobe_tx_gain = 1.9952623149688787e-3;  // -27 dBi
  double radar_sidelobe_rx_gain = 1.9952623149688787e-3;
  double rcs_m2 = 1.0;              // target cross-section toward each radar
  double rcs_cross_m2 = 1.0;        // cross-section on radar-to-radar paths
  double noise_psd_w_per_hz = 1e-18;  // -150 dBm/Hz
  double noise_cu_w = -1.0;         // override; < 0 means "derive from PSD"
  double noise_radar_w = -1.0;      // override; < 0 means "derive from PSD"
  double rtr_coupling = 1.0;        // weight of the target-bounced cross path
  FadingMode fading_mode = FadingMode::DeterministicUnit;
  std::uint64_t fading_seed = 1;

  Eigen::Vector3d bs_position{0.0, 0.0, 0.0};
  std::vector<Eigen::Vector3d> radar_positions{{-1000.0, 0.0, 0.0}, {1000.0, 0.0, 0.0}};
  Eigen::Vector3d target_position{0.0, 0.0, 10000.0};
  std::vector<Eigen::Vector3d> cu_positions;  // may be empty; see place_entities

  double noise_cu_total_w() const;
  double noise_radar_total_w() const;
  void validate() const;  // throws ConfigError on violated invariants
};

// Default values mirror the reference simulation setup above.
Scenario default_scenario();

// Parses a flat JSON document; keys carry explicit units (_dbm, _dbi, _m,
// _hz, _w). Unknown fading modes, missing keys referenced by other keys and
// non-positive physical quantities raise ConfigError with distinct kinds.
Scenario load_scenario(const nlohmann::json& document);
Scenario load_scenario_file(const std::string& path);

struct Geometry {
  Eigen::Vector3d bs;
  std::vector<Eigen::Vector3d> cus;
  std::vector<Eigen::Vector3d> radars;
  Eigen::Vector3d target;

  int num_cus() const { return static_cast<int>(cus.size()); }
  int num_radars() const { return static_cast<int>(radars.size()); }
};

// Base station, radars and target come from the scenario; users are placed
// uniformly in a 400 m x 400 m ground square centred on the BS. The draw is
// sequential in the user index, so geometries for Q and Q+1 users share the
// first Q positions for a fixed seed. Explicit cu_positions in the scenario
// take precedence.
Geometry place_entities(const Scenario& scenario, int num_cus, std::uint64_t seed);

// CSV export: entity,x_m,y_m,z_m
void write_geometry_csv(const Geometry& geometry, std::ostream& out);

struct ChannelSet {
  Eigen::VectorXd h_c;       // BS -> user q
  Eigen::MatrixXd g_rc;      // radar k -> user q, K x Q
  Eigen::VectorXd h_r;       // round trip radar k -> target -> radar k
  Eigen::VectorXd h_cr;      // BS -> radar k receiver
  Eigen::MatrixXd g_rr;      // radar k' tx -> radar k rx direct, K x K, diagonal unused
  Eigen::MatrixXd g_rtr;     // radar k' tx -> target -> radar k rx, K x K, diagonal unused
  Eigen::VectorXd noise_cu_w;
  Eigen::VectorXd noise_radar_w;
  double rtr_coupling = 1.0;

  // Normalized coefficients of the linear radar-protection constraints:
  //   g_tilde(k',k) = (g_rr(k',k) + c * g_rtr(k',k)) / h_r(k)
  //   h_tilde(k)    = h_cr(k) / h_r(k)
  //   sigma_tilde(k) = noise_radar_w(k) / h_r(k)
  Eigen::MatrixXd g_tilde;
  Eigen::VectorXd h_tilde;
  Eigen::VectorXd sigma_tilde;

  int num_cus() const { return static_cast<int>(h_c.size()); }
  int num_radars() const { return static_cast<int>(h_r.size()); }

  void refresh_normalized();  // recomputes g_tilde, h_tilde, sigma_tilde
};

// Evaluates every closed-form path gain for the given geometry. Throws
// std::domain_error("degenerate geometry...") when two distinct entities on
// a modelled path coincide.
ChannelSet compute_channels(const Scenario& scenario, const Geometry& geometry);

// Unit-mean exponential power factor stream used by the Rayleigh mode;
// exposed for statistical tests.
class FadingStream {
 public:
  explicit FadingStream(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  double next_unit_mean();

 private:
  std::uint64_t state_;
};

double db_to_linear(double db);
double dbm_to_watts(double dbm);

}  // namespace crcopt
