#pragma once

#include <optional>

#include "lgsim/sim_kernel.hpp"

namespace lgsim {

/// [earliest, latest] bound on true time returned by a bounded-uncertainty
/// clock.
struct TimeInterval {
  SimTime earliest{};
  SimTime latest{};

  Duration width() const { return latest - earliest; }
  bool contains(SimTime t) const { return earliest <= t && t <= latest; }
  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

/// True iff `recorded` is certainly more than `delta` old as of `now`:
/// recorded.latest + delta < now.earliest.
inline bool is_older_than(const TimeInterval& recorded, Duration delta, const TimeInterval& now) {
  return recorded.latest + delta < now.earliest;
}

/// True iff `recorded` is certainly at most `delta` old as of `now`:
/// now.latest <= recorded.earliest + delta. With exact clocks this is the
/// negation of is_older_than; with uncertainty both can be false.
inline bool is_within_age(const TimeInterval& recorded, Duration delta, const TimeInterval& now) {
  return now.latest <= recorded.earliest + delta;
}

struct ClockConfig {
  /// Half-width of every interval; healthy readings keep true time inside.
  Duration max_error = std::chrono::microseconds(50);
  /// The reported center strays from true time by at most
  /// max_error * center_jitter, so containment holds with margin.
  double center_jitter = 0.9;
  bool monotonic = true;
  /// Fault injection: from this instant the clock stalls until it lags true
  /// time by `broken_lag`, then runs at the true rate behind it.
  std::optional<SimTime> broken_from;
  Duration broken_lag{};
};

/// One node's bounded-uncertainty clock.
class IntervalClock {
 public:
  IntervalClock(ClockConfig config, Rng rng);

  TimeInterval now(SimTime true_time);

  void break_at(SimTime from, Duration lag);
  bool broken_at(SimTime true_time) const {
    return config_.broken_from && true_time >= *config_.broken_from;
  }
  const ClockConfig& config() const { return config_; }

 private:
  ClockConfig config_;
  Rng rng_;
  std::optional<TimeInterval> last_;
};

/// Local timer with a constant rate error. A drift rate r makes the timer
/// read (1 + r) * true elapsed. A node whose |r| * delta <= epsilon gains or
/// loses at most epsilon while measuring delta; error over other durations
/// scales linearly.
struct DriftTimer {
  SimTime start_true_time{};
  double drift_rate = 0.0;
  Duration epsilon{};

  Duration elapsed(SimTime true_now) const;
  bool elapsed_at_least(SimTime true_now, Duration d) const { return elapsed(true_now) >= d; }
  bool elapsed_less_than(SimTime true_now, Duration d) const { return elapsed(true_now) < d; }

  /// True time at which the timer will first read at least `d`.
  SimTime when_reads(Duration d) const;
};

/// Largest drift rate a node may have while keeping its error over `delta`
/// within `epsilon`.
double max_drift_rate(Duration epsilon, Duration delta);

}  // namespace lgsim
