#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgsim/clock.hpp"
#include "lgsim/network.hpp"
#include "lgsim/raft.hpp"
#include "lgsim/sim_kernel.hpp"

namespace lgsim {

struct ClusterConfig {
  std::uint64_t seed = 1;
  int n_nodes = 3;
  MechanismConfig mechanism;
  NetworkConfig net;
  ClockConfig clock;
  /// Per-node drift rates for DriftTimer mode; missing entries are 0.
  std::vector<double> drift_rates;
  /// One-way client <-> server delay.
  Duration client_latency{};
  bool check_invariants = true;
};

struct ClusterEvent {
  enum class Kind { Elected, LeaseAcquired, Crashed, Restarted, ClockBroken, Partitioned, Healed };
  Kind kind;
  SimTime at{};
  NodeId node = -1;
  Term term = 0;
  /// Elected: number of limbo entries.
  std::uint64_t detail = 0;
};

std::string to_string(ClusterEvent::Kind k);

struct Violation {
  SimTime at{};
  std::string invariant;
  std::string detail;
};

class Cluster;

/// Omniscient checker of the Raft and LeaseGuard safety properties, run
/// after every event.
class InvariantMonitor {
 public:
  explicit InvariantMonitor(const Cluster& cluster);

  void after_event();
  void on_elected(const RaftNode& n);
  void on_commit(const RaftNode& n, Index old_commit);
  void on_read_served(const RaftNode& n, const std::string& key);
  void on_crash(NodeId id);

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  struct LeaderView {
    Term term = 0;
    Index last = 0;
    std::uint64_t hash = 0;
    // Prior-term summary taken at election.
    Index last_prior = 0;
    SimTime max_prior_latest{};
    SimTime max_prior_origin{};
    std::set<std::string> limbo_keys;
  };

  void fail(const std::string& invariant, const std::string& detail);
  SimTime now() const;
  bool clocks_healthy() const;
  void check_completeness(const RaftNode& n);

  const Cluster& cluster_;
  std::map<Term, NodeId> leader_of_term_;
  std::vector<std::optional<LeaderView>> leaders_;
  std::vector<Index> applied_seen_;
  /// Prefix hash of every index known applied somewhere.
  std::vector<std::uint64_t> applied_hash_;
  /// Highest index committed by a leader of each term, with its prefix hash.
  std::map<Term, std::pair<Index, std::uint64_t>> committed_by_term_;
  std::vector<Violation> violations_;
};

/// Nodes, network, clocks and monitor wired onto one event loop.
class Cluster : public FaultTarget, public NodeObserver {
 public:
  explicit Cluster(ClusterConfig config);
  ~Cluster() override;

  EventLoop& loop() { return loop_; }
  const EventLoop& loop() const { return loop_; }
  const ClusterConfig& config() const { return config_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  RaftNode& node(NodeId id) { return *nodes_.at(id); }
  const RaftNode& node(NodeId id) const { return *nodes_.at(id); }
  Network<Message>& network() { return *net_; }

  /// Arms every node; node 0 campaigns immediately.
  void start();

  /// Highest-term live leader, if any.
  std::optional<NodeId> leader() const;

  /// Client requests travel with the configured client latency. A request
  /// to a crashed node, or a reply from one, is lost.
  void submit_write(NodeId target, Command command, WriteCallback done);
  void submit_read(NodeId target, const std::string& key, ReadCallback done);

  // FaultTarget.
  std::vector<NodeId> resolve(const NodeRef& ref, const std::vector<NodeId>& exclude) override;
  void crash_node(NodeId id) override;
  void restart_node(NodeId id) override;
  std::uint64_t cut(const std::vector<NodeId>& a, const std::vector<NodeId>& b) override;
  void heal(std::uint64_t partition) override;
  void break_clock(NodeId id, Duration lag) override;
  void limbo_burst(NodeId leader, int count) override;

  /// Called by limbo_burst; the workload installs one that records the
  /// writes in its history.
  void set_limbo_burst_handler(std::function<void(NodeId, int)> h) { limbo_handler_ = std::move(h); }

  // NodeObserver.
  void on_elected(const RaftNode& n) override;
  void on_commit(const RaftNode& n, Index old_commit) override;
  void on_read_served(const RaftNode& n, const std::string& key) override;

  const std::vector<ClusterEvent>& events() const { return events_; }
  const std::vector<Violation>& violations() const;
  bool any_clock_broken() const { return clock_broken_; }
  /// True instant at which a leader first committed the ListAppend value.
  std::optional<SimTime> first_commit(const std::string& value) const;

 private:
  ClusterConfig config_;
  EventLoop loop_;
  Rng master_;
  std::unique_ptr<Network<Message>> net_;
  std::vector<std::unique_ptr<RaftNode>> nodes_;
  std::unique_ptr<InvariantMonitor> monitor_;
  std::vector<ClusterEvent> events_;
  std::unordered_map<std::string, SimTime> first_commit_;
  std::optional<NodeId> last_crashed_;
  std::function<void(NodeId, int)> limbo_handler_;
  bool clock_broken_ = false;
};

}  // namespace lgsim
