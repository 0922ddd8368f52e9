#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nilm/power_series.hpp"
#include "nilm/random.hpp"

namespace nilm {

// One phase of an appliance activation: a power level held for an
// exponentially distributed duration with the given mean.
struct AppliancePhase {
  double power_watts = 0.0;
  double mean_duration_s = 60.0;
};

// A two-state (ON/OFF) square-wave appliance; an activation runs its phases
// in order, so a multi-phase spec models machines that step through power
// levels within one activation. `duty_cycle` is the long-run fraction of
// time the appliance is active; 1 means always on.
struct ApplianceSpec {
  std::string name;
  std::vector<AppliancePhase> phases;
  double duty_cycle = 0.5;
};

struct SyntheticConfig {
  std::int64_t period_s = 8;
  std::size_t length = 0;
  double noise_sigma_watts = 0.0;
  std::uint64_t seed = 0;
  std::int64_t start_timestamp = 0;
  std::vector<ApplianceSpec> appliances;
};

struct SyntheticHousehold {
  PowerSeries mains;
  std::vector<PowerSeries> appliances;  // exact per-appliance ground truth
};

namespace detail {

inline std::vector<double> synthesize_appliance(const ApplianceSpec& spec,
                                                std::size_t length,
                                                std::int64_t period_s,
                                                Rng& rng) {
  if (spec.phases.empty())
    throw SpecError("synthetic appliance \"" + spec.name + "\" has no phases");
  if (!(spec.duty_cycle > 0.0    && spec.duty_cycle <= 1.0))
    throw SpecError("synthetic appliance duty cycle must be in (0, 1]");

  double on_mean_s = 0.0;
  for (const auto& p : spec.phases) on_mean_s += p.mean_duration_s;
  const double off_mean_s =
      on_mean_s * (1.0 - spec.duty_cycle) / spec.duty_cycle;

  std::vector<double> values(length, 0.0);
  std::size_t t = 0;
  auto draw_samples = [&](double mean_s) -> std::size_t {
    const double s = rng.exponential(mean_s) / static_cast<double>(period_s);
    return static_cast<std::size_t>(std::llround(std::max(1.0, s)));
  };
  bool on = spec.duty_cycle >= 1.0 || rng.uniform() < spec.duty_cycle;
  while (t < length) {
    if (on) {
      for (const auto& phase : spec.phases) {
        std::size_t n = draw_samples(phase.mean_duration_s);
        for (; n > 0 && t < length; --n, ++t) values[t] = phase.power_watts;
        if (t >= length) break;
      }
    } else {
      std::size_t n = draw_samples(off_mean_s);
      t += n;
      if (t > length) t = length;
    }
    on = spec.duty_cycle >= 1.0 ? true : !on;
  }
  return values;
}

}  // namespace detail

// Additive household model: the mains is the sum of all appliance signals
// plus zero-mean Gaussian noise, clamped at 0 W. Every appliance draws from
// its own seed substream, so adding an appliance does not change the others.
inline SyntheticHousehold synthesize_household(const SyntheticConfig& config) {
  if (config.length < 1) throw SpecError("synthesize: length must be >= 1");
  if (config.period_s < 1) throw SpecError("synthesize: period must be >= 1");

  SyntheticHousehold hh;
  std::vector<std::int64_t> timestamps(config.length);
  for (std::size_t i = 0; i < config.length; ++i)
    timestamps[i] =
        config.start_timestamp + static_cast<std::int64_t>(i) * config.period_s;

  std::vector<double> sum(config.length, 0.0);
  for (std::size_t a = 0; a < config.appliances.size(); ++a) {
    Rng rng(substream_seed(config.seed, a + 1));
    auto values = detail::synthesize_appliance(config.appliances[a],
                                               config.length,
                                               config.period_s, rng);
    for (std::size_t i = 0; i < config.length; ++i) sum[i] += values[i];
    PowerSeries s;
    s.timestamps = timestamps;
    s.values = std::move(values);
    s.period_s = config.period_s;
    s.channel = config.appliances[a].name;
    hh.appliances.push_back(std::move(s));
  }

  hh.mains.timestamps = std::move(timestamps);
  hh.mains.values.resize(config.length);
  hh.mains.period_s = config.period_s;
  hh.mains.channel = "mains";
  Rng noise_rng(substream_seed(config.seed, 0));
  for (std::size_t i = 0; i < config.length; ++i) {
    double v = sum[i];
    if (config.noise_sigma_watts > 0.0)
      v += config.noise_sigma_watts * noise_rng.normal();
    hh.mains.values[i] = v < 0.0 ? 0.0 : v;
  }
  return hh;
}

}  // namespace nilm
