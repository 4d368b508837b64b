#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lgsim/sim_kernel.hpp"

namespace lgsim {

using NodeId = int;

/// Messages of different classes draw latency from separate random streams,
/// so traffic of one kind never perturbs the delays of another.
enum class TrafficClass { Replication, Election, ReadCheck };

struct LatencyModel {
  Duration mean = std::chrono::microseconds(191);
  /// Distribution variance in ns^2.
  double variance_ns2 = 391.0 * 1e6;
};

struct NetworkConfig {
  LatencyModel latency;
  /// Per-message receive cost; a node handles arriving messages one at a
  /// time, so concurrent traffic queues behind it.
  Duration io_time = std::chrono::microseconds(10);
};

template <class Payload>
struct Envelope {
  NodeId from = 0;
  NodeId to = 0;
  Payload payload;
  SimTime send_time{};
  SimTime deliver_time{};
};

struct NetworkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

/// Lossy, reordering message transport with crash and partition state.
template <class Payload>
class Network {
 public:
  using Handler = std::function<void(Envelope<Payload>&&)>;
  using PartitionId = std::uint64_t;

  Network(EventLoop& loop, NetworkConfig config, int n_nodes, const Rng& master)
      : loop_(loop),
        config_(config),
        n_(n_nodes),
        master_(master.derive("net")),
        handlers_(n_nodes),
        alive_(n_nodes, true),
        io_free_(n_nodes, SimTime{}) {}

  int size() const { return n_; }
  const NetworkConfig& config() const { return config_; }
  const NetworkStats& stats() const { return stats_; }

  void set_handler(NodeId id, Handler h) { handlers_.at(id) = std::move(h); }

  void send(NodeId from, NodeId to, TrafficClass cls, Payload payload) {
    ++stats_.sent;
    Duration latency = sample_lognormal(stream(from, to, cls), config_.latency.mean,
                                        config_.latency.variance_ns2);
    Envelope<Payload> env{from, to, std::move(payload), loop_.now(), loop_.now() + latency};
    loop_.schedule(latency, [this, env = std::move(env)]() mutable { arrive(std::move(env)); });
  }

  void crash(NodeId id) { alive_.at(id) = false; }
  void restart(NodeId id) { alive_.at(id) = true; }
  bool alive(NodeId id) const { return alive_.at(id); }

  /// Cuts every link between a node in `a` and a node in `b`.
  PartitionId partition(std::vector<NodeId> a, std::vector<NodeId> b) {
    PartitionId id = next_partition_++;
    partitions_.emplace(id, std::make_pair(std::move(a), std::move(b)));
    return id;
  }
  void heal(PartitionId id) { partitions_.erase(id); }
  void heal_all() { partitions_.clear(); }

  bool reachable(NodeId from, NodeId to) const {
    for (const auto& [id, sides] : partitions_) {
      if ((contains(sides.first, from) && contains(sides.second, to)) ||
          (contains(sides.first, to) && contains(sides.second, from))) {
        return false;
      }
    }
    return true;
  }

 private:
  static bool contains(const std::vector<NodeId>& v, NodeId x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  }

  Rng& stream(NodeId from, NodeId to, TrafficClass cls) {
    auto key = std::make_tuple(from, to, static_cast<int>(cls));
    auto it = streams_.find(key);
    if (it == streams_.end()) {
      std::string name = std::to_string(from) + "->" + std::to_string(to) + "/" +
                         std::to_string(static_cast<int>(cls));
      it = streams_.emplace(key, master_.derive(name)).first;
    }
    return it->second;
  }

  bool deliverable(const Envelope<Payload>& env) const {
    return alive_[env.to] && reachable(env.from, env.to) && handlers_[env.to];
  }

  void arrive(Envelope<Payload>&& env) {
    if (!deliverable(env)) {
      ++stats_.dropped;
      return;
    }
    if (config_.io_time <= Duration::zero()) {
      deliver(std::move(env));
      return;
    }
    SimTime start = std::max(loop_.now(), io_free_[env.to]);
    io_free_[env.to] = start + config_.io_time;
    loop_.schedule_at(io_free_[env.to],
                      [this, env = std::move(env)]() mutable { deliver(std::move(env)); });
  }

  void deliver(Envelope<Payload>&& env) {
    if (!deliverable(env)) {
      ++stats_.dropped;
      return;
    }
    env.deliver_time = loop_.now();
    ++stats_.delivered;
    handlers_[env.to](std::move(env));
  }

  EventLoop& loop_;
  NetworkConfig config_;
  int n_;
  Rng master_;
  std::vector<Handler> handlers_;
  std::vector<bool> alive_;
  std::vector<SimTime> io_free_;
  std::map<std::tuple<NodeId, NodeId, int>, Rng> streams_;
  std::map<PartitionId, std::pair<std::vector<NodeId>, std::vector<NodeId>>> partitions_;
  PartitionId next_partition_ = 0;
  NetworkStats stats_;
};

/// Node reference in a fault plan, resolved when the fault fires.
struct NodeRef {
  enum class Kind { Id, Leader, LastCrashed, Others };
  Kind kind = Kind::Id;
  NodeId id = 0;

  static NodeRef node(NodeId id) { return {Kind::Id, id}; }
  static NodeRef leader() { return {Kind::Leader, 0}; }
  static NodeRef last_crashed() { return {Kind::LastCrashed, 0}; }
  static NodeRef others() { return {Kind::Others, 0}; }
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

std::string to_string(const NodeRef& ref);
NodeRef parse_node_ref(const std::string& text);

struct CrashFault {
  NodeRef node;
  Duration at{};
};

struct RestartFault {
  NodeRef node;
  Duration at{};
};

struct PartitionFault {
  std::vector<NodeRef> side_a;
  std::vector<NodeRef> side_b;
  Duration from{};
  Duration until{};
};

struct ClockFault {
  NodeRef node;
  Duration at{};
  Duration lag{};
};

/// Timed faults, with instants relative to the moment the plan is applied.
struct FaultPlan {
  std::vector<CrashFault> crashes;
  std::vector<RestartFault> restarts;
  std::vector<PartitionFault> partitions;
  std::vector<ClockFault> clock_faults;
  /// Writes appended on the leader just before the first crash, replicated
  /// but never committed by it.
  int limbo_burst = 0;

  bool empty() const {
    return crashes.empty() && restarts.empty() && partitions.empty() && clock_faults.empty() &&
           limbo_burst == 0;
  }
};

/// Rejects plans with negative instants, empty or inverted partition
/// windows, or node ids outside [0, n_nodes). Throws std::invalid_argument.
void validate(const FaultPlan& plan, int n_nodes);

/// What a fault plan acts on. Implemented by the cluster harness.
class FaultTarget {
 public:
  virtual ~FaultTarget() = default;
  /// Nodes the reference denotes right now; empty if none (e.g. no leader).
  virtual std::vector<NodeId> resolve(const NodeRef& ref, const std::vector<NodeId>& exclude) = 0;
  virtual void crash_node(NodeId id) = 0;
  virtual void restart_node(NodeId id) = 0;
  virtual std::uint64_t cut(const std::vector<NodeId>& a, const std::vector<NodeId>& b) = 0;
  virtual void heal(std::uint64_t partition) = 0;
  virtual void break_clock(NodeId id, Duration lag) = 0;
  virtual void limbo_burst(NodeId leader, int count) = 0;
};

/// Schedules every fault of `plan` on `loop`, offsets measured from now.
void apply_fault_plan(EventLoop& loop, const FaultPlan& plan, FaultTarget& target);

}  // namespace lgsim
