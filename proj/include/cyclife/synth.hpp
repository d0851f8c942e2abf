#pragma once

// Deterministic synthetic fleet: knee-shaped capacity fade with a linear
// early component, policy-driven temperature / charge time, drifting internal
// resistance, and discharge curves whose early-life changes (plateau shift,
// plateau tilt, staging-step drift) scale inversely with cycle life. Each of
// those mechanisms has its own per-cell scatter. A test fixture, not an
// electrochemical model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "cyclife/cell_data.hpp"
#include "cyclife/error.hpp"
#include "cyclife/parallel.hpp"

namespace cyclife::synth {

struct SynthConfig {
  int n_cells = 124;
  // Lognormal life distribution, tuned so the clamped draws have mean ~806
  // and standard deviation ~377.
  double life_log_mean = 6.5932;
  double life_log_std = 0.4447;
  double life_min = 150.0;
  double life_max = 2300.0;
  double gamma_min = 2.0;  // knee exponent range
  double gamma_max = 6.0;
  int cycles_past_eol = 5;

  double nominal_capacity = 1.1;  // Ah
  double ir_drift = 0.002;        // Ohm of IR growth per 1000 cycles
  double base_temperature = 30.0; // degC

  // Noise standard deviations.
  double q_noise = 5e-5;          // Ah
  double ir_noise = 5e-5;         // Ohm
  double temperature_noise = 0.3; // degC
  double charge_time_noise = 0.1; // minutes
  double voltage_shift_noise = 2e-5;  // V
  double policy_noise = 0.4;      // severity units

  double voltage_shift_rate = 0.004;  // V of curve shift accumulated over one life
  double voltage_shift_spread = 0.3;  // per-cell lognormal scatter of that rate
  double plateau_tilt_rate = 0.015;   // V of plateau steepening over one life
  double plateau_tilt_spread = 0.3;
  // Staging step: voltage drop, initial capacity position, width, and drift of
  // its position toward lower capacity over one life (per-cell scatter).
  double step_drop = 0.03;
  double step_position = 0.4;
  double step_width = 0.005;
  double step_drift_rate = 0.05;
  double step_drift_spread = 0.5;
  // Fraction of the summary capacity fade carried into the discharge curves.
  double curve_fade_coupling = 0.0;
  // Share of the end-of-life fade that accrues linearly rather than through
  // the knee term, and its per-cell lognormal scatter. The fade bracket is 1
  // at n = life for any share, so the end-of-life crossing is unchanged.
  double linear_fade_share = 0.2;
  double linear_fade_spread = 0.25;
  int curve_samples = 60;
  int curve_cycle_limit = 100;  // curves for cycles 1..limit; 0 = every cycle

  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    if (n_cells < 1) fail(ErrorCode::invalid_argument, "synth: n_cells must be >= 1");
    if (!(life_min > 0.0 && life_min <= life_max))
      fail(ErrorCode::invalid_argument, "synth: life clamp bounds must be positive and ordered");
    if (life_min < 120.0) fail(ErrorCode::invalid_argument, "synth: life_min must be >= 120");
    if (!(gamma_min > 0.0 && gamma_min <= gamma_max))
      fail(ErrorCode::invalid_argument, "synth: knee exponent range must be positive and ordered");
    if (curve_samples < 2) fail(ErrorCode::invalid_argument, "synth: curve_samples must be >= 2");
    if (!(linear_fade_share >= 0.0 && linear_fade_share < 1.0))
      fail(ErrorCode::invalid_argument, "synth: linear_fade_share must be in [0, 1)");
  }

  // All noise sources off.
  SynthConfig noise_free() const {
    SynthConfig c = *this;
    c.q_noise = c.ir_noise = c.temperature_noise = c.charge_time_noise = 0.0;
    c.voltage_shift_noise = c.policy_noise = 0.0;
    c.voltage_shift_spread = c.linear_fade_spread = c.plateau_tilt_spread = c.step_drift_spread = 0.0;
    return c;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-cell seed as a pure function of (master seed, cell index).
inline std::uint64_t cell_seed(std::uint64_t master, std::size_t index) {
  return splitmix64(splitmix64(master) ^ (0xD1B54A32D192ED03ULL * (index + 1)));
}

// Voltage of the reference discharge curve at depth-of-discharge s in [0, 1]:
// a gently sloping plateau followed by a steep end-of-discharge drop.
// `tilt` steepens the plateau. An optional staging step drops the voltage by
// `step_drop` over a narrow window of width `step_width` centred at
// `step_at`.
inline double template_voltage(double s, double tilt = 0.0, double step_drop = 0.0, double step_at = 0.5,
                               double step_width = 0.005) {
  double v = 3.35 - (0.2 + tilt) * s - 1.0 * std::pow(s, 10.0);
  if (step_drop > 0.0) v -= step_drop / (1.0 + std::exp(-(s - step_at) / step_width));
  return v;
}

// Leading C-rate of a policy string such as "5.4C-80PCT"; 4.8 if absent.
inline double policy_c_rate(const std::string& policy) {
  double c = 0.0;
  if (std::sscanf(policy.c_str(), "%lfC", &c) == 1 && c > 0.0) return c;
  return 4.8;
}

inline std::string policy_name(double c_rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1fC-80PCT", c_rate);
  return buf;
}

inline data::CellRecord generate_cell(int life, double gamma, const std::string& policy, std::uint64_t seed,
                                      const SynthConfig& cfg = {}) {
  if (life < 120) fail(ErrorCode::invalid_argument, "generate_cell: life must be >= 120, got " + std::to_string(life));
  if (!(gamma > 0.0)) fail(ErrorCode::invalid_argument, "generate_cell: knee exponent must be > 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto noise = [&](double sd) { return sd > 0.0 ? sd * unit(rng) : 0.0; };

  data::CellRecord cell;
  cell.charge_policy = policy;
  const double c_rate = policy_c_rate(policy);
  const double harsh = c_rate - 3.6;
  const double ir_start = 0.0165 + noise(3.0 * cfg.ir_noise);
  const double q0 = cfg.nominal_capacity;
  const double dlife = static_cast<double>(life);
  const double share = std::clamp(cfg.linear_fade_share * std::exp(noise(cfg.linear_fade_spread)), 0.0, 0.5);
  const double shift_rate = cfg.voltage_shift_rate * std::exp(noise(cfg.voltage_shift_spread));
  const double tilt_rate = cfg.plateau_tilt_rate * std::exp(noise(cfg.plateau_tilt_spread));
  const double step_drift = cfg.step_drift_rate * std::exp(noise(cfg.step_drift_spread));

  const int total = life + cfg.cycles_past_eol;
  cell.cycles.reserve(static_cast<std::size_t>(total));
  for (int n = 1; n <= total; ++n) {
    const double age = static_cast<double>(n) / dlife;
    data::CycleSummary c;
    c.cycle_index = n;
    const double fade = (1.0 - share) * std::pow(age, gamma) + share * age;
    c.q_discharge = q0 * (1.0 - 0.2 * fade) + noise(cfg.q_noise);
    c.q_charge = c.q_discharge + 0.002 + std::abs(noise(cfg.q_noise));
    c.internal_resistance = std::max(1e-4, ir_start + cfg.ir_drift * static_cast<double>(n) / 1000.0 + noise(cfg.ir_noise));
    c.t_avg = cfg.base_temperature + 1.2 * harsh + 0.5 * static_cast<double>(n) / 1000.0 + noise(cfg.temperature_noise);
    c.t_max = c.t_avg + 3.0 + 0.8 * harsh + std::abs(noise(cfg.temperature_noise));
    c.t_min = c.t_avg - 1.5 - std::abs(noise(cfg.temperature_noise));
    c.charge_time = std::max(1.0, 48.0 / c_rate + 2.0 + noise(cfg.charge_time_noise));
    cell.cycles.push_back(c);
  }

  const int curve_last = cfg.curve_cycle_limit > 0 ? std::min(total, cfg.curve_cycle_limit) : total;
  const int m = cfg.curve_samples;
  for (int n = 1; n <= curve_last; ++n) {
    const double shift = std::clamp(shift_rate * static_cast<double>(n) / dlife +
                                        noise(cfg.voltage_shift_noise),
                                    0.0, 0.045);
    const double qcap =
        q0 + cfg.curve_fade_coupling * (cell.cycles[static_cast<std::size_t>(n - 1)].q_discharge - q0);
    const double tilt = std::min(tilt_rate * static_cast<double>(n) / dlife, 0.06);
    const double step_at = std::max(0.05, cfg.step_position - step_drift * static_cast<double>(n) / dlife);

    std::vector<double> depth;
    for (int k = 0; k < m; ++k) depth.push_back(static_cast<double>(k) / static_cast<double>(m - 1));
    if (cfg.step_drop > 0.0) {
      // Resolve the step with extra samples across +/- 6 widths.
      for (int k = 0; k <= 40; ++k) {
        const double s = step_at + cfg.step_width * (-6.0 + 12.0 * k / 40.0);
        if (s > 0.0 && s < 1.0) depth.push_back(s);
      }
      std::sort(depth.begin(), depth.end());
      depth.erase(std::unique(depth.begin(), depth.end(), [](double a, double b) { return b - a < 1e-9; }),
                  depth.end());
    }
    data::DischargeCurve curve;
    curve.cycle_index = n;
    curve.samples.reserve(depth.size());
    for (double s : depth)
      curve.samples.push_back(
          {template_voltage(s, tilt, cfg.step_drop, step_at, cfg.step_width) - shift, qcap * s});
    cell.curves[n] = std::move(curve);
  }
  return cell;
}

inline data::Dataset generate_dataset(const SynthConfig& cfg = {}) {
  cfg.validate();
  struct Draw {
    int life;
    double gamma;
    std::string policy;
  };
  std::mt19937_64 rng(splitmix64(cfg.seed));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double log_span = std::log(cfg.life_max) - std::log(cfg.life_min);

  std::vector<Draw> draws;
  for (int i = 0; i < cfg.n_cells; ++i) {
    const double raw = std::exp(cfg.life_log_mean + cfg.life_log_std * unit(rng));
    const int life = static_cast<int>(std::lround(std::clamp(raw, cfg.life_min, cfg.life_max)));
    const double gamma = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * uniform(rng);
    // Short-lived cells get harsher (faster) charging policies.
    const double severity = (std::log(cfg.life_max) - std::log(static_cast<double>(life))) / log_span;
    const double jitter = cfg.policy_noise * unit(rng);
    const double c_rate = 3.6 + 2.4 * std::clamp(severity + jitter, 0.0, 1.0);
    draws.push_back({life, gamma, policy_name(c_rate)});
  }

  data::Dataset ds;
  ds.nominal_capacity = cfg.nominal_capacity;
  ds.eol_threshold = 0.8 * cfg.nominal_capacity;
  ds.cells.resize(draws.size());
  parallel_for(draws.size(), cfg.threads, [&](std::size_t i) {
    auto cell = generate_cell(draws[i].life, draws[i].gamma, draws[i].policy, cell_seed(cfg.seed, i), cfg);
    char id[32];
    std::snprintf(id, sizeof(id), "cell-%04zu", i + 1);
    cell.cell_id = id;
    cell.batch_id = "batch" + std::to_string(1 + 3 * i / draws.size());
    ds.cells[i] = std::move(cell);
  });
  return ds;
}

}  // namespace cyclife::synth
