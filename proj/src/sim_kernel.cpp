#include "lgsim/sim_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lgsim {

EventId EventLoop::schedule(Duration delay, Callback cb) {
  if (delay < Duration::zero()) {
    throw std::invalid_argument("EventLoop::schedule: negative delay");
  }
  return schedule_at(now_ + delay, std::move(cb));
}

EventId EventLoop::schedule_at(SimTime deadline, Callback cb) {
  if (deadline < now_) {
    throw std::invalid_argument("EventLoop::schedule_at: deadline in the past");
  }
  EventId id{deadline, next_sequence_++};
  queue_.emplace(id, std::move(cb));
  return id;
}

bool EventLoop::cancel(EventId id) { return queue_.erase(id) > 0; }

bool EventLoop::step(SimTime limit) {
  if (queue_.empty() || queue_.begin()->first.deadline > limit) {
    return false;
  }
  auto node = queue_.extract(queue_.begin());
  now_ = node.key().deadline;
  ++executed_;
  node.mapped()();
  if (post_event_) {
    post_event_();
  }
  return true;
}

SimTime EventLoop::run_until(SimTime limit) {
  if (running_) {
    throw std::logic_error("EventLoop: reentrant run");
  }
  running_ = true;
  try {
    while (step(limit)) {
    }
  } catch (...) {
    running_ = false;
    throw;
  }
  running_ = false;
  if (limit > now_) {
    now_ = limit;
  }
  return now_;
}

bool EventLoop::run_until_condition(const std::function<bool()>& done, SimTime limit) {
  if (running_) {
    throw std::logic_error("EventLoop: reentrant run");
  }
  if (done()) {
    return true;
  }
  running_ = true;
  bool satisfied = false;
  try {
    while (step(limit)) {
      if (done()) {
        satisfied = true;
        break;
      }
    }
  } catch (...) {
    running_ = false;
    throw;
  }
  running_ = false;
  return satisfied;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(splitmix64(seed) ^ fnv1a(name));
}

Rng Rng::derive(std::string_view name) const { return Rng(mix_seed(seed_, name)); }

double Rng::uniform01() {
  // 53 random mantissa bits.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) {
    throw std::invalid_argument("Rng::uniform_int: empty range");
  }
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) {
    return static_cast<std::int64_t>(engine_());
  }
  // Rejection sampling keeps the result unbiased.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::standard_normal() {
  // Box-Muller; one draw pair per sample keeps the stream position simple.
  double u1 = 1.0 - uniform01();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Duration sample_lognormal(Rng& rng, Duration mean, double variance_ns2) {
  if (mean <= Duration::zero() || !(variance_ns2 > 0.0)) {
    throw std::invalid_argument("sample_lognormal: mean and variance must be positive");
  }
  double m = static_cast<double>(mean.count());
  double sigma2 = std::log1p(variance_ns2 / (m * m));
  double mu = std::log(m) - sigma2 / 2.0;
  double x = std::exp(mu + std::sqrt(sigma2) * rng.standard_normal());
  return Duration{std::max<std::int64_t>(1, std::llround(x))};
}

Duration sample_interarrival_poisson(Rng& rng, Duration mean_gap) {
  if (mean_gap <= Duration::zero()) {
    throw std::invalid_argument("sample_interarrival_poisson: mean gap must be positive");
  }
  double u = 1.0 - rng.uniform01();
  return Duration{std::llround(-std::log(u) * static_cast<double>(mean_gap.count()))};
}

ZipfDistribution::ZipfDistribution(double a, std::size_t n_keys) : a_(a) {
  if (a < 0.0 || n_keys == 0) {
    throw std::invalid_argument("ZipfDistribution: need a >= 0 and n_keys >= 1");
  }
  cdf_.resize(n_keys);
  double total = 0.0;
  for (std::size_t k = 0; k < n_keys; ++k) {
    total += std::pow(static_cast<double>(k + 1), -a);
    cdf_[k] = total;
  }
  for (double& c : cdf_) {
    c /= total;
  }
  cdf_.back() = 1.0;
}

std::size_t ZipfDistribution::operator()(Rng& rng) const {
  double u = rng.uniform01();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
}

double ZipfDistribution::probability(std::size_t rank) const {
  if (rank >= cdf_.size()) {
    return 0.0;
  }
  return rank == 0 ? cdf_[0] : cdf_[rank] - cdf_[rank - 1];
}

std::size_t sample_zipf(Rng& rng, double a, std::size_t n_keys) {
  return ZipfDistribution(a, n_keys)(rng);
}

}  // namespace lgsim
