#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace lgsim {

/// True (omniscient) simulated time. Only the event loop and the checkers
/// see it directly; nodes observe time through their clocks.
struct SimClock {
  using rep = std::int64_t;
  using period = std::nano;
  using duration = std::chrono::nanoseconds;
  using time_point = std::chrono::time_point<SimClock>;
  static constexpr bool is_steady = true;
};

using Duration = std::chrono::nanoseconds;
using SimTime = SimClock::time_point;

constexpr SimTime kEpoch{};

inline constexpr SimTime at(Duration since_epoch) { return SimTime{since_epoch}; }
inline constexpr std::int64_t nanos(SimTime t) { return t.time_since_epoch().count(); }
inline constexpr double to_ms(Duration d) { return static_cast<double>(d.count()) / 1e6; }

struct EventId {
  SimTime deadline{};
  std::uint64_t sequence = 0;
  friend auto operator<=>(const EventId&, const EventId&) = default;
};

/// Single-threaded discrete-event loop. Events run in (deadline, sequence)
/// order; equal deadlines run in insertion order.
class EventLoop {
 public:
  using Callback = std::function<void()>;

  EventLoop() = default;
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  SimTime now() const { return now_; }

  EventId schedule(Duration delay, Callback cb);
  EventId schedule_at(SimTime deadline, Callback cb);
  bool cancel(EventId id);

  /// Runs every event with deadline <= limit, then advances the clock to
  /// limit. Returns the new current time.
  SimTime run_until(SimTime limit);

  /// Runs events until `done()` holds after some event, or the next event
  /// lies beyond `limit`. Returns whether `done()` held.
  bool run_until_condition(const std::function<bool()>& done, SimTime limit);

  /// Called after every executed event; used by invariant monitors.
  void set_post_event_hook(Callback hook) { post_event_ = std::move(hook); }

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t executed() const { return executed_; }

 private:
  bool step(SimTime limit);

  std::map<EventId, Callback> queue_;
  SimTime now_{};
  std::uint64_t next_sequence_ = 0;
  std::uint64_t executed_ = 0;
  bool running_ = false;
  Callback post_event_;
};

/// Seeded pseudorandom stream. Distribution sampling is implemented here
/// rather than with <random> distributions, whose output is
/// implementation-defined, so that a seed reproduces the same run on any
/// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent sub-stream keyed by a stable entity name. Deriving a stream
  /// never consumes draws from this one.
  Rng derive(std::string_view name) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform01();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform01() < p; }
  double standard_normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name);

/// Lognormal sample parameterized by the distribution's own mean and
/// variance (not those of the underlying normal). Variance is in ns^2.
Duration sample_lognormal(Rng& rng, Duration mean, double variance_ns2);

/// Exponential inter-arrival gap with the given mean.
Duration sample_interarrival_poisson(Rng& rng, Duration mean_gap);

/// Zipf over ranks 0..n-1 with P(k) proportional to 1/(k+1)^a.
class ZipfDistribution {
 public:
  ZipfDistribution(double a, std::size_t n_keys);

  std::size_t operator()(Rng& rng) const;
  double probability(std::size_t rank) const;
  double exponent() const { return a_; }
  std::size_t size() const { return cdf_.size(); }

 private:
  double a_;
  std::vector<double> cdf_;
};

std::size_t sample_zipf(Rng& rng, double a, std::size_t n_keys);

}  // namespace lgsim
