#include "crcopt/scenario.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace crcopt {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double splitmix64_to_unit(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z = z ^ (z >> 31);
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

double distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return (a - b).norm(); }

double checked_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const char* path) {
  double d = distance(a, b);
  if (!(d > 0.0)) {
    throw std::domain_error(std::string("degenerate geometry: zero distance on path ") + path);
  }
  return d;
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError(ConfigError::Kind::NonPositiveQuantity,
                      std::string("non-positive quantity: ") + name);
  }
}

const nlohmann::json& fetch(const nlohmann::json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) {
    throw ConfigError(ConfigError::Kind::MissingKey, std::string("missing key: ") + key);
  }
  return *it;
}

double get_number(const nlohmann::json& doc, const char* key, double fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  if (!it->is_number()) {
    throw ConfigError(ConfigError::Kind::BadValue, std::string("expected number for key: ") + key);
  }
  return it->get<double>();
}

bool has(const nlohmann::json& doc, const char* key) { return doc.find(key) != doc.end(); }

// Accepts either <base>_w or <base>_dbm for power-like keys.
double get_power_w(const nlohmann::json& doc, const std::string& base, double fallback_w) {
  std::string key_w = base + "_w";
  std::string key_dbm = base + "_dbm";
  bool have_w = has(doc, key_w.c_str());
  bool have_dbm = has(doc, key_dbm.c_str());
  if (have_w && have_dbm) {
    throw ConfigError(ConfigError::Kind::BadValue, "conflicting units for key: " + base);
  }
  if (have_w) return get_number(doc, key_w.c_str(), 0.0);
  if (have_dbm) return dbm_to_watts(get_number(doc, key_dbm.c_str(), 0.0));
  return fallback_w;
}

double get_gain_linear(const nlohmann::json& doc, const std::string& base, double fallback) {
  std::string key_dbi = base + "_dbi";
  if (has(doc, key_dbi.c_str())) return db_to_linear(get_number(doc, key_dbi.c_str(), 0.0));
  std::string key_lin = base + "_linear";
  if (has(doc, key_lin.c_str())) return get_number(doc, key_lin.c_str(), 0.0);
  return fallback;
}

Eigen::Vector3d parse_position(const nlohmann::json& node, const char* key) {
  if (!node.is_array() || node.size() != 3) {
    throw ConfigError(ConfigError::Kind::BadValue,
                      std::string("expected [x, y, z] array for key: ") + key);
  }
  Eigen::Vector3d p;
  for (int i = 0; i < 3; ++i) {
    if (!node[static_cast<size_t>(i)].is_number()) {
      throw ConfigError(ConfigError::Kind::BadValue,
                        std::string("expected numeric coordinates for key: ") + key);
    }
    p[i] = node[static_cast<size_t>(i)].get<double>();
  }
  if (!p.allFinite()) {
    throw ConfigError(ConfigError::Kind::BadValue, std::string("non-finite position: ") + key);
  }
  return p;
}

}  // namespace

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

double FadingStream::next_unit_mean() {
  // Inverse-CDF draw of an exponential with mean one; explicit bit handling
  // keeps sequences identical across standard libraries.
  double u = splitmix64_to_unit(state_);
  return -std::log1p(-u);
}

double Scenario::noise_cu_total_w() const {
  return noise_cu_w > 0.0 ? noise_cu_w : noise_psd_w_per_hz * bandwidth_hz;
}

double Scenario::noise_radar_total_w() const {
  return noise_radar_w > 0.0 ? noise_radar_w : noise_psd_w_per_hz * bandwidth_hz;
}

void Scenario::validate() const {
  require_positive(wavelength_m, "wavelength_m");
  require_positive(bandwidth_hz, "bandwidth_hz");
  require_positive(bs_power_budget_w, "bs_power_budget_w");
  require_positive(radar_power_budget_w, "radar_power_budget_w");
  require_positive(radar_sinr_threshold, "radar_sinr_threshold");
  require_positive(bs_tx_gain, "bs_tx_gain");
  require_positive(cu_rx_gain, "cu_rx_gain");
  require_positive(radar_mainlobe_tx_gain, "radar_mainlobe_tx_gain");
  require_positive(radar_mainlobe_rx_gain, "radar_mainlobe_rx_gain");
  require_positive(radar_sidelobe_tx_gain, "radar_sidelobe_tx_gain");
  require_positive(radar_sidelobe_rx_gain, "radar_sidelobe_rx_gain");
  require_positive(rcs_m2, "rcs_m2");
  require_positive(rcs_cross_m2, "rcs_cross_m2");
  require_positive(noise_cu_total_w(), "noise_cu_total_w");
  require_positive(noise_radar_total_w(), "noise_radar_total_w");
  if (min_rate_bps < 0.0) {
    throw ConfigError(ConfigError::Kind::BadValue, "min_rate_bps must be nonnegative");
  }
  if (rtr_coupling < 0.0) {
    throw ConfigError(ConfigError::Kind::BadValue, "rtr_coupling must be nonnegative");
  }
  if (radar_positions.empty()) {
    throw ConfigError(ConfigError::Kind::BadValue, "at least one radar required");
  }
  for (const auto& p : radar_positions) {
    if (!p.allFinite()) throw ConfigError(ConfigError::Kind::BadValue, "non-finite radar position");
  }
  if (!bs_position.allFinite() || !target_position.allFinite()) {
    throw ConfigError(ConfigError::Kind::BadValue, "non-finite position");
  }
  for (const auto& p : cu_positions) {
    if (!p.allFinite()) throw ConfigError(ConfigError::Kind::BadValue, "non-finite user position");
    if (!(distance(p, bs_position) > 0.0)) {
      throw ConfigError(ConfigError::Kind::BadValue, "user co-located with the base station");
    }
  }
}

Scenario default_scenario() { return Scenario{}; }

Scenario load_scenario(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ConfigError(ConfigError::Kind::BadValue, "scenario document must be a JSON object");
  }
  Scenario s;
  s.wavelength_m = get_number(doc, "wavelength_m", s.wavelength_m);
  s.bandwidth_hz = get_number(doc, "bandwidth_hz", s.bandwidth_hz);
  s.bs_power_budget_w = get_power_w(doc, "bs_power_budget", s.bs_power_budget_w);
  s.radar_power_budget_w = get_power_w(doc, "radar_power_budget", s.radar_power_budget_w);
  if (has(doc, "radar_sinr_threshold_db")) {
    s.radar_sinr_threshold = db_to_linear(get_number(doc, "radar_sinr_threshold_db", 10.0));
  } else {
    s.radar_sinr_threshold = get_number(doc, "radar_sinr_threshold_linear", s.radar_sinr_threshold);
  }
  s.min_rate_bps = get_number(doc, "min_rate_bps", s.min_rate_bps);
  s.bs_tx_gain = get_gain_linear(doc, "bs_tx_gain", s.bs_tx_gain);
  s.cu_rx_gain = get_gain_linear(doc, "cu_rx_gain", s.cu_rx_gain);
  s.radar_mainlobe_tx_gain = get_gain_linear(doc, "radar_mainlobe_tx_gain", s.radar_mainlobe_tx_gain);
  s.radar_mainlobe_rx_gain = get_gain_linear(doc, "radar_mainlobe_rx_gain", s.radar_mainlobe_rx_gain);
  s.radar_sidelobe_tx_gain = get_gain_linear(doc, "radar_sidelobe_tx_gain", s.radar_sidelobe_tx_gain);
  s.radar_sidelobe_rx_gain = get_gain_linear(doc, "radar_sidelobe_rx_gain", s.radar_sidelobe_rx_gain);
  s.rcs_m2 = get_number(doc, "rcs_m2", s.rcs_m2);
  s.rcs_cross_m2 = get_number(doc, "rcs_cross_m2", s.rcs_cross_m2);
  if (has(doc, "noise_psd_dbm_per_hz")) {
    s.noise_psd_w_per_hz = dbm_to_watts(get_number(doc, "noise_psd_dbm_per_hz", -150.0));
  }
  if (has(doc, "noise_total_w")) {
    double total = get_number(doc, "noise_total_w", -1.0);
    s.noise_cu_w = total;
    s.noise_radar_w = total;
  }
  s.noise_cu_w = get_number(doc, "noise_cu_w", s.noise_cu_w);
  s.noise_radar_w = get_number(doc, "noise_radar_w", s.noise_radar_w);
  s.rtr_coupling = get_number(doc, "rtr_coupling", s.rtr_coupling);

  if (has(doc, "fading_mode")) {
    const nlohmann::json& mode = fetch(doc, "fading_mode");
    if (!mode.is_string()) {
      throw ConfigError(ConfigError::Kind::UnknownFadingMode, "fading_mode must be a string");
    }
    std::string text = mode.get<std::string>();
    if (text == "deterministic-unit") {
      s.fading_mode = FadingMode::DeterministicUnit;
    } else if (text == "rayleigh") {
      s.fading_mode = FadingMode::Rayleigh;
    } else {
      throw ConfigError(ConfigError::Kind::UnknownFadingMode, "unknown fading mode: " + text);
    }
  }
  s.fading_seed = static_cast<std::uint64_t>(get_number(doc, "fading_seed", 1.0));

  if (has(doc, "bs_position_m")) s.bs_position = parse_position(fetch(doc, "bs_position_m"), "bs_position_m");
  if (has(doc, "target_position_m")) {
    s.target_position = parse_position(fetch(doc, "target_position_m"), "target_position_m");
  }
  if (has(doc, "radar_positions_m")) {
    const nlohmann::json& arr = fetch(doc, "radar_positions_m");
    if (!arr.is_array() || arr.empty()) {
      throw ConfigError(ConfigError::Kind::BadValue, "radar_positions_m must be a nonempty array");
    }
    s.radar_positions.clear();
    for (const auto& node : arr) s.radar_positions.push_back(parse_position(node, "radar_positions_m"));
  }
  if (has(doc, "cu_positions_m")) {
    const nlohmann::json& arr = fetch(doc, "cu_positions_m");
    if (!arr.is_array()) {
      throw ConfigError(ConfigError::Kind::BadValue, "cu_positions_m must be an array");
    }
    s.cu_positions.clear();
    for (const auto& node : arr) s.cu_positions.push_back(parse_position(node, "cu_positions_m"));
  }

  s.validate();
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(ConfigError::Kind::BadValue, "cannot open scenario file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(ConfigError::Kind::BadValue, std::string("malformed scenario JSON: ") + e.what());
  }
  return load_scenario(doc);
}

Geometry place_entities(const Scenario& scenario, int num_cus, std::uint64_t seed) {
  if (num_cus < 1) throw std::invalid_argument("place_entities: need at least one user");
  Geometry g;
  g.bs = scenario.bs_position;
  g.radars = scenario.radar_positions;
  g.target = scenario.target_position;
  if (!scenario.cu_positions.empty()) {
    if (static_cast<int>(scenario.cu_positions.size()) < num_cus) {
      throw std::invalid_argument("place_entities: scenario provides fewer user positions than requested");
    }
    g.cus.assign(scenario.cu_positions.begin(), scenario.cu_positions.begin() + num_cus);
    return g;
  }
  std::uint64_t state = seed ? seed : 0x2545f4914f6cdd1dull;
  g.cus.reserve(static_cast<size_t>(num_cus));
  for (int q = 0; q < num_cus; ++q) {
    double x = (splitmix64_to_unit(state) - 0.5) * 400.0;
    double y = (splitmix64_to_unit(state) - 0.5) * 400.0;
    g.cus.emplace_back(g.bs.x() + x, g.bs.y() + y, 0.0);
  }
  return g;
}

void write_geometry_csv(const Geometry& geometry, std::ostream& out) {
  auto line = [&out](const std::string& name, const Eigen::Vector3d& p) {
    out << name << ',' << p.x() << ',' << p.y() << ',' << p.z() << '\n';
  };
  out << "entity,x_m,y_m,z_m\n";
  line("bs", geometry.bs);
  for (size_t q = 0; q < geometry.cus.size(); ++q) line("cu" + std::to_string(q + 1), geometry.cus[q]);
  for (size_t k = 0; k < geometry.radars.size(); ++k) line("radar" + std::to_string(k + 1), geometry.radars[k]);
  line("target", geometry.target);
}

void ChannelSet::refresh_normalized() {
  const int num_k = num_radars();
  g_tilde = Eigen::MatrixXd::Zero(num_k, num_k);
  h_tilde = Eigen::VectorXd::Zero(num_k);
  sigma_tilde = Eigen::VectorXd::Zero(num_k);
  for (int k = 0; k < num_k; ++k) {
    for (int kp = 0; kp < num_k; ++kp) {
      if (kp == k) continue;
      g_tilde(kp, k) = g_rr(kp, k) / h_r[k] + rtr_coupling * g_rtr(kp, k) / h_r[k];
    }
    h_tilde[k] = h_cr[k] / h_r[k];
    sigma_tilde[k] = noise_radar_w[k] / h_r[k];
  }
}

ChannelSet compute_channels(const Scenario& scenario, const Geometry& geometry) {
  scenario.validate();
  const int num_q = geometry.num_cus();
  const int num_k = geometry.num_radars();
  if (num_q < 1) throw std::invalid_argument("compute_channels: geometry has no users");
  if (num_k < 1) throw std::invalid_argument("compute_channels: geometry has no radars");

  const double lambda_sq = scenario.wavelength_m * scenario.wavelength_m;
  const double four_pi_sq = (4.0 * kPi) * (4.0 * kPi);
  const double four_pi_cu = four_pi_sq * 4.0 * kPi;

  FadingStream fading(scenario.fading_seed);
  auto small_scale = [&]() {
    return scenario.fading_mode == FadingMode::Rayleigh ? fading.next_unit_mean() : 1.0;
  };

  ChannelSet ch;
  ch.rtr_coupling = scenario.rtr_coupling;
  ch.h_c = Eigen::VectorXd::Zero(num_q);
  ch.g_rc = Eigen::MatrixXd::Zero(num_k, num_q);
  ch.h_r = Eigen::VectorXd::Zero(num_k);
  ch.h_cr = Eigen::VectorXd::Zero(num_k);
  ch.g_rr = Eigen::MatrixXd::Zero(num_k, num_k);
  ch.g_rtr = Eigen::MatrixXd::Zero(num_k, num_k);
  ch.noise_cu_w = Eigen::VectorXd::Constant(num_q, scenario.noise_cu_total_w());
  ch.noise_radar_w = Eigen::VectorXd::Constant(num_k, scenario.noise_radar_total_w());

  // Radar-to-target legs feed the round-trip gain and the target-bounced
  // cross paths; no small-scale factor applies on them.
  Eigen::VectorXd radar_target_dist(num_k);
  for (int k = 0; k < num_k; ++k) {
    radar_target_dist[k] =
        checked_distance(geometry.radars[static_cast<size_t>(k)], geometry.target, "radar-target");
  }

  for (int q = 0; q < num_q; ++q) {
    double d = checked_distance(geometry.bs, geometry.cus[static_cast<size_t>(q)], "bs-user");
    ch.h_c[q] =
        scenario.bs_tx_gain * scenario.cu_rx_gain * lambda_sq / (four_pi_sq * d * d) * small_scale();
  }
  for (int k = 0; k < num_k; ++k) {
    double d_rt = radar_target_dist[k];
    ch.h_r[k] = scenario.radar_mainlobe_tx_gain * scenario.radar_mainlobe_rx_gain * scenario.rcs_m2 *
                lambda_sq / (four_pi_cu * d_rt * d_rt * d_rt * d_rt);
    double d_cr = checked_distance(geometry.bs, geometry.radars[static_cast<size_t>(k)], "bs-radar");
    ch.h_cr[k] = scenario.bs_tx_gain * scenario.radar_sidelobe_rx_gain * lambda_sq /
                 (four_pi_sq * d_cr * d_cr) * small_scale();
  }
  for (int k = 0; k < num_k; ++k) {
    for (int q = 0; q < num_q; ++q) {
      double d = checked_distance(geometry.radars[static_cast<size_t>(k)],
                                  geometry.cus[static_cast<size_t>(q)], "radar-user");
      ch.g_rc(k, q) = scenario.radar_sidelobe_tx_gain * scenario.cu_rx_gain * lambda_sq /
                      (four_pi_sq * d * d) * small_scale();
    }
  }
  for (int kp = 0; kp < num_k; ++kp) {
    for (int k = 0; k < num_k; ++k) {
      if (kp == k) continue;
      double d_rr = checked_distance(geometry.radars[static_cast<size_t>(kp)],
                                     geometry.radars[static_cast<size_t>(k)], "radar-radar");
      ch.g_rr(kp, k) = scenario.radar_sidelobe_tx_gain * scenario.radar_sidelobe_rx_gain * lambda_sq /
                       (four_pi_sq * d_rr * d_rr) * small_scale();
      ch.g_rtr(kp, k) = scenario.radar_mainlobe_tx_gain * scenario.radar_mainlobe_rx_gain *
                        scenario.rcs_cross_m2 * lambda_sq /
                        (four_pi_cu * radar_target_dist[k] * radar_target_dist[k] *
                         radar_target_dist[kp] * radar_target_dist[kp]);
    }
  }

  ch.refresh_normalized();
  return ch;
}

}  // namespace crcopt
