#include "lgsim/clock.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lgsim {

IntervalClock::IntervalClock(ClockConfig config, Rng rng) : config_(config), rng_(std::move(rng)) {
  if (config_.max_error < Duration::zero()) {
    throw std::invalid_argument("ClockConfig: max_error must be non-negative");
  }
  if (config_.center_jitter < 0.0 || config_.center_jitter >= 1.0) {
    throw std::invalid_argument("ClockConfig: center_jitter must lie in [0, 1)");
  }
}

void IntervalClock::break_at(SimTime from, Duration lag) {
  config_.broken_from = from;
  config_.broken_lag = lag;
}

TimeInterval IntervalClock::now(SimTime true_time) {
  SimTime center = true_time;
  if (config_.max_error > Duration::zero()) {
    double bound = static_cast<double>(config_.max_error.count()) * config_.center_jitter;
    center += Duration{std::llround(rng_.uniform(-bound, bound))};
  }
  if (broken_at(true_time)) {
    // Stall: the reading stops advancing until it is broken_lag behind.
    center -= std::min(true_time - *config_.broken_from, config_.broken_lag);
  }
  TimeInterval reading{center - config_.max_error, center + config_.max_error};
  if (config_.monotonic && last_) {
    if (reading.earliest < last_->earliest) {
      auto shift = last_->earliest - reading.earliest;
      reading.earliest += shift;
      reading.latest += shift;
    }
  }
  last_ = reading;
  return reading;
}

Duration DriftTimer::elapsed(SimTime true_now) const {
  Duration d = true_now - start_true_time;
  return d + Duration{std::llround(static_cast<double>(d.count()) * drift_rate)};
}

SimTime DriftTimer::when_reads(Duration d) const {
  double true_needed = static_cast<double>(d.count()) / (1.0 + drift_rate);
  SimTime t = start_true_time + Duration{static_cast<std::int64_t>(std::ceil(true_needed))};
  while (elapsed(t) < d) {
    t += Duration{1};
  }
  while (t > start_true_time && elapsed(t - Duration{1}) >= d) {
    t -= Duration{1};
  }
  return t;
}

double max_drift_rate(Duration epsilon, Duration delta) {
  if (delta <= Duration::zero()) {
    return 0.0;
  }
  return static_cast<double>(epsilon.count()) / static_cast<double>(delta.count());
}

}  // namespace lgsim
