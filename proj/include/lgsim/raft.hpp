#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "lgsim/clock.hpp"
#include "lgsim/network.hpp"
#include "lgsim/sim_kernel.hpp"

namespace lgsim {

using Term = std::uint64_t;
using Index = std::uint64_t;

struct ListAppend {
  std::string key;
  std::string value;
  friend bool operator==(const ListAppend&, const ListAppend&) = default;
};
struct Noop {
  friend bool operator==(const Noop&, const Noop&) = default;
};
struct EndLease {
  friend bool operator==(const EndLease&, const EndLease&) = default;
};
using Command = std::variant<ListAppend, Noop, EndLease>;

std::string to_string(const Command& c);

struct LogEntry {
  Term term = 0;
  Index index = 0;
  Command command;
  /// Leader's clock reading when it created the entry.
  TimeInterval write_time;
  /// True creation instant; observers only, never read by protocol code.
  SimTime origin_time{};
};

/// One line per entry: index, term, command, write_time bounds in ns.
std::string dump_entry(const LogEntry& e);

/// 1-based replicated log. Each slot also remembers when this node received
/// the entry (the start of its local drift timer) and a running hash of the
/// prefix ending at it.
class RaftLog {
 public:
  struct Slot {
    LogEntry entry;
    SimTime received_at{};
    std::uint64_t prefix_hash = 0;
  };

  Index last_index() const { return slots_.size(); }
  Term last_term() const { return slots_.empty() ? 0 : slots_.back().entry.term; }
  Term term_at(Index i) const { return i == 0 || i > slots_.size() ? 0 : slots_[i - 1].entry.term; }
  const LogEntry& at(Index i) const { return slots_.at(i - 1).entry; }
  const Slot& slot(Index i) const { return slots_.at(i - 1); }
  std::uint64_t prefix_hash(Index i) const { return i == 0 ? 0 : slots_.at(i - 1).prefix_hash; }
  bool empty() const { return slots_.empty(); }

  void append(LogEntry e, SimTime received_at);
  /// Removes entries with index >= i.
  void truncate_from(Index i);
  /// Restarts every local timer at `t` (used after a crash).
  void reset_received(SimTime t);

  /// Lowest index touched by append/truncate since the last call, or 0.
  Index take_dirty_from() const;

  std::string dump() const;

 private:
  std::vector<Slot> slots_;
  mutable Index dirty_from_ = 0;
};

enum class Role { Follower, Candidate, Leader };
enum class MechanismKind { Inconsistent, Quorum, OngaroLease, LeaseGuard };
enum class ClockMode { Interval, DriftTimer };

std::string to_string(Role r);
std::string to_string(MechanismKind k);
std::string to_string(ClockMode m);
MechanismKind parse_mechanism_kind(const std::string& s);
ClockMode parse_clock_mode(const std::string& s);

struct MechanismConfig {
  MechanismKind kind = MechanismKind::LeaseGuard;
  bool defer_commit = true;
  bool inherited_reads = true;
  Duration delta = std::chrono::seconds(1);
  Duration election_timeout = std::chrono::milliseconds(500);
  ClockMode clock_mode = ClockMode::Interval;
  /// Drift bound over delta, DriftTimer mode only.
  Duration epsilon{};
  /// Zero means delta / 2.
  Duration noop_period{};
  bool lease_maintenance = true;
  Duration heartbeat = std::chrono::milliseconds(50);
  std::size_t max_batch = 128;

  Duration effective_noop_period() const {
    return noop_period > Duration::zero() ? noop_period : delta / 2;
  }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct RequestVote {
  Term term = 0;
  NodeId candidate = 0;
  Index last_log_index = 0;
  Term last_log_term = 0;
  /// Set for elections triggered by a leader handing over.
  bool transfer = false;
};
struct RequestVoteReply {
  Term term = 0;
  bool granted = false;
};
struct AppendEntries {
  Term term = 0;
  NodeId leader = 0;
  Index prev_index = 0;
  Term prev_term = 0;
  std::vector<LogEntry> entries;
  Index leader_commit = 0;
  TimeInterval sent_at;
};
struct AppendEntriesReply {
  Term term = 0;
  bool success = false;
  Index match_index = 0;
  Index conflict_hint = 0;
  TimeInterval rpc_start;
};
struct ReadCheck {
  Term term = 0;
  std::uint64_t id = 0;
};
struct ReadCheckReply {
  Term term = 0;
  std::uint64_t id = 0;
  bool ok = false;
};
struct TimeoutNow {
  Term term = 0;
  Index leader_commit = 0;
};

using Message = std::variant<RequestVote, RequestVoteReply, AppendEntries, AppendEntriesReply,
                             ReadCheck, ReadCheckReply, TimeoutNow>;

enum class OpStatus { Ok, NotLeader, NoLease, LimboConflict };
std::string to_string(OpStatus s);

struct WriteResult {
  OpStatus status = OpStatus::NotLeader;
  /// Commit instant on this leader, for Ok.
  SimTime commit_time{};
};
struct ReadResult {
  OpStatus status = OpStatus::NotLeader;
  std::vector<std::string> values;
  /// Instant whose committed state the values reflect, for Ok.
  SimTime exec_time{};
};

using WriteCallback = std::function<void(const WriteResult&)>;
using ReadCallback = std::function<void(const ReadResult&)>;

class RaftNode;

/// Hooks for omniscient observers; default no-ops.
class NodeObserver {
 public:
  virtual ~NodeObserver() = default;
  virtual void on_elected(const RaftNode&) {}
  virtual void on_commit(const RaftNode&, Index /*old_commit*/) {}
  virtual void on_read_served(const RaftNode&, const std::string& /*key*/) {}
};

struct NodeContext {
  EventLoop* loop = nullptr;
  std::function<void(NodeId to, TrafficClass cls, Message msg)> send;
  NodeObserver* observer = nullptr;
};

/// One Raft replica with a pluggable read mechanism.
class RaftNode {
 public:
  RaftNode(NodeId id, int n_nodes, MechanismConfig config, NodeContext ctx, IntervalClock clock,
           double drift_rate, Rng rng);
  RaftNode(const RaftNode&) = delete;
  RaftNode& operator=(const RaftNode&) = delete;

  /// Arms the election timer; `campaign_now` starts an election immediately.
  void start(bool campaign_now);
  void receive(NodeId from, const Message& msg);

  void client_write(Command command, WriteCallback done);
  /// Appends all commands, then replicates them in one round.
  void client_write_batch(std::vector<Command> commands, const WriteCallback& done);
  void client_read(const std::string& key, ReadCallback done);

  /// Planned step-down: commit an EndLease entry, hand over, step down.
  void relinquish();

  void crash();
  void restart();

  /// Test hook: forces an election timeout now.
  void campaign() { start_election(false); }

  NodeId id() const { return id_; }
  bool alive() const { return alive_; }
  Role role() const { return role_; }
  bool is_leader() const { return alive_ && role_ == Role::Leader; }
  Term term() const { return term_; }
  std::optional<NodeId> voted_for() const { return voted_for_; }
  const RaftLog& log() const { return log_; }
  Index commit_index() const { return commit_index_; }
  Index last_applied() const { return last_applied_; }
  const std::map<std::string, std::vector<std::string>>& kv() const { return kv_; }
  const MechanismConfig& config() const { return config_; }
  double drift_rate() const { return drift_rate_; }

  Index limbo_low() const { return limbo_low_; }
  Index limbo_high() const { return limbo_high_; }
  const std::set<std::string>& limbo_keys() const { return limbo_keys_; }
  Index last_prev_term_index() const { return last_prev_term_index_; }
  bool own_term_committed() const { return own_term_committed_; }
  bool prior_lease_expired();
  /// Clock reading taken by the most recent call into the clock.
  const TimeInterval& last_reading() const { return last_reading_; }
  IntervalClock& clock() { return clock_; }
  DriftTimer timer_for(Index i) const;
  Index match_index(NodeId peer) const { return match_index_.at(peer); }

  std::string dump_state() const;

 private:
  struct PendingRead {
    std::string key;
    ReadCallback done;
    std::vector<std::string> snapshot;
    SimTime exec_time{};
    std::set<NodeId> acks;
  };

  SimTime now() const { return ctx_.loop->now(); }
  TimeInterval reading();
  int majority() const { return n_ / 2 + 1; }
  void send(NodeId to, TrafficClass cls, Message msg);

  void reset_election_timer();
  void cancel_timers();
  void start_election(bool transfer);
  void become_follower(Term term);
  void become_leader();
  void fail_pending(OpStatus status);

  void on_request_vote(NodeId from, const RequestVote& m);
  void on_request_vote_reply(NodeId from, const RequestVoteReply& m);
  void on_append_entries(NodeId from, const AppendEntries& m);
  void on_append_entries_reply(NodeId from, const AppendEntriesReply& m);
  void on_read_check(NodeId from, const ReadCheck& m);
  void on_read_check_reply(NodeId from, const ReadCheckReply& m);
  void on_timeout_now(NodeId from, const TimeoutNow& m);

  Index append_own(Command command);
  void replicate_new_entries();
  void send_append(NodeId peer, Index from);
  void broadcast_heartbeat();
  void heartbeat_tick();
  void advance_commit();
  void schedule_lease_recheck();
  void apply_committed();
  void set_commit(Index c);
  void after_commit(Index old_commit);
  void handover();

  void serve_read(const std::string& key, ReadCallback& done, SimTime exec_time);
  void start_read_check(PendingRead read);
  bool leaseguard_read_allowed(const std::string& key, OpStatus& why);
  bool ongaro_has_lease();
  bool heard_from_leader_recently();

  NodeId id_;
  int n_;
  MechanismConfig config_;
  NodeContext ctx_;
  IntervalClock clock_;
  double drift_rate_;
  Rng rng_;

  bool alive_ = true;
  std::uint64_t incarnation_ = 0;
  Role role_ = Role::Follower;
  Term term_ = 0;
  std::optional<NodeId> voted_for_;
  RaftLog log_;
  Index commit_index_ = 0;
  Index last_applied_ = 0;
  std::map<std::string, std::vector<std::string>> kv_;
  TimeInterval last_reading_;

  std::optional<EventId> election_timer_;
  std::optional<EventId> heartbeat_timer_;
  std::optional<EventId> lease_timer_;
  std::set<NodeId> votes_;
  std::optional<TimeInterval> last_heard_leader_;

  // Leader state.
  std::vector<Index> next_index_;
  std::vector<Index> match_index_;
  std::vector<Index> sent_index_;
  std::vector<std::optional<TimeInterval>> ongaro_s_;
  Index limbo_low_ = 0;
  Index limbo_high_ = 0;
  std::set<std::string> limbo_keys_;
  Index last_prev_term_index_ = 0;
  SimTime prior_lease_latest_{};
  bool prior_lease_expired_ = true;
  bool own_term_committed_ = false;
  bool relinquishing_ = false;
  Index end_lease_index_ = 0;
  std::map<Index, std::vector<WriteCallback>> pending_writes_;
  std::map<std::uint64_t, PendingRead> pending_reads_;
  std::vector<PendingRead> parked_reads_;
  std::uint64_t next_read_id_ = 1;
};

}  // namespace lgsim
