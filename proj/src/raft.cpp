#include "lgsim/raft.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace lgsim {

namespace {

std::uint64_t hash_bytes(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_entry(std::uint64_t prev, const LogEntry& e) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ prev;
  h = hash_bytes(h, std::to_string(e.index) + ":" + std::to_string(e.term) + ":");
  return mix_seed(hash_bytes(h, to_string(e.command)), "entry");
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string to_string(const Command& c) {
  return std::visit(overloaded{[](const ListAppend& a) { return "append(" + a.key + "," + a.value + ")"; },
                               [](const Noop&) { return std::string("noop"); },
                               [](const EndLease&) { return std::string("end_lease"); }},
                    c);
}

std::string dump_entry(const LogEntry& e) {
  std::ostringstream out;
  out << e.index << '\t' << e.term << '\t' << to_string(e.command) << '\t'
      << nanos(e.write_time.earliest) << '\t' << nanos(e.write_time.latest);
  return out.str();
}

void RaftLog::append(LogEntry e, SimTime received_at) {
  if (e.index != slots_.size() + 1) {
    throw std::logic_error("RaftLog::append: index mismatch");
  }
  std::uint64_t h = hash_entry(prefix_hash(slots_.size()), e);
  if (dirty_from_ == 0 || e.index < dirty_from_) dirty_from_ = e.index;
  slots_.push_back({std::move(e), received_at, h});
}

void RaftLog::truncate_from(Index i) {
  if (i == 0 || i > slots_.size()) return;
  slots_.resize(i - 1);
  if (dirty_from_ == 0 || i < dirty_from_) dirty_from_ = i;
}

void RaftLog::reset_received(SimTime t) {
  for (auto& s : slots_) s.received_at = t;
}

Index RaftLog::take_dirty_from() const {
  Index d = dirty_from_;
  dirty_from_ = 0;
  return d;
}

std::string RaftLog::dump() const {
  std::string out;
  for (const auto& s : slots_) {
    out += dump_entry(s.entry);
    out += '\n';
  }
  return out;
}

std::string to_string(Role r) {
  switch (r) {
    case Role::Follower:
      return "follower";
    case Role::Candidate:
      return "candidate";
    case Role::Leader:
      return "leader";
  }
  return "?";
}

std::string to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::Inconsistent:
      return "inconsistent";
    case MechanismKind::Quorum:
      return "quorum";
    case MechanismKind::OngaroLease:
      return "ongaro";
    case MechanismKind::LeaseGuard:
      return "leaseguard";
  }
  return "?";
}

std::string to_string(ClockMode m) { return m == ClockMode::Interval ? "interval" : "drift_timer"; }

MechanismKind parse_mechanism_kind(const std::string& s) {
  if (s == "inconsistent") return MechanismKind::Inconsistent;
  if (s == "quorum") return MechanismKind::Quorum;
  if (s == "ongaro") return MechanismKind::OngaroLease;
  if (s == "leaseguard") return MechanismKind::LeaseGuard;
  throw std::invalid_argument("unknown mechanism '" + s + "'");
}

ClockMode parse_clock_mode(const std::string& s) {
  if (s == "interval") return ClockMode::Interval;
  if (s == "drift_timer") return ClockMode::DriftTimer;
  throw std::invalid_argument("unknown clock mode '" + s + "'");
}

std::string to_string(OpStatus s) {
  switch (s) {
    case OpStatus::Ok:
      return "ok";
    case OpStatus::NotLeader:
      return "not_leader";
    case OpStatus::NoLease:
      return "no_lease";
    case OpStatus::LimboConflict:
      return "limbo_conflict";
  }
  return "?";
}

void MechanismConfig::validate() const {
  if (delta <= Duration::zero()) throw std::invalid_argument("mechanism.delta must be positive");
  if (election_timeout <= Duration::zero()) {
    throw std::invalid_argument("raft.election_timeout must be positive");
  }
  if (heartbeat <= Duration::zero() || heartbeat >= election_timeout) {
    throw std::invalid_argument("raft.heartbeat must be positive and below the election timeout");
  }
  if (max_batch == 0) throw std::invalid_argument("raft.max_batch must be positive");
  if (noop_period < Duration::zero()) {
    throw std::invalid_argument("mechanism.noop_period must be non-negative");
  }
  if (clock_mode == ClockMode::DriftTimer) {
    if (inherited_reads) {
      throw std::invalid_argument("inherited_reads requires clock_mode=interval");
    }
    if (epsilon < Duration::zero() || epsilon >= delta) {
      throw std::invalid_argument("mechanism.epsilon must lie in [0, delta)");
    }
  }
}

RaftNode::RaftNode(NodeId id, int n_nodes, MechanismConfig config, NodeContext ctx,
                   IntervalClock clock, double drift_rate, Rng rng)
    : id_(id),
      n_(n_nodes),
      config_(config),
      ctx_(std::move(ctx)),
      clock_(std::move(clock)),
      drift_rate_(drift_rate),
      rng_(std::move(rng)),
      next_index_(n_nodes, 1),
      match_index_(n_nodes, 0),
      sent_index_(n_nodes, 0),
      ongaro_s_(n_nodes) {
  config_.validate();
}

TimeInterval RaftNode::reading() {
  last_reading_ = clock_.now(now());
  return last_reading_;
}

void RaftNode::send(NodeId to, TrafficClass cls, Message msg) {
  if (ctx_.send) ctx_.send(to, cls, std::move(msg));
}

DriftTimer RaftNode::timer_for(Index i) const {
  return DriftTimer{log_.slot(i).received_at, drift_rate_, config_.epsilon};
}

void RaftNode::start(bool campaign_now) {
  if (campaign_now) {
    start_election(false);
  } else {
    reset_election_timer();
  }
}

void RaftNode::reset_election_timer() {
  if (election_timer_) ctx_.loop->cancel(*election_timer_);
  auto et = config_.election_timeout.count();
  Duration delay{et + rng_.uniform_int(0, et - 1)};
  election_timer_ = ctx_.loop->schedule(delay, [this] {
    election_timer_.reset();
    if (alive_ && role_ != Role::Leader) start_election(false);
  });
}

void RaftNode::cancel_timers() {
  for (auto* t : {&election_timer_, &heartbeat_timer_, &lease_timer_}) {
    if (*t) ctx_.loop->cancel(**t);
    t->reset();
  }
}

void RaftNode::start_election(bool transfer) {
  if (!alive_ || role_ == Role::Leader) return;
  fail_pending(OpStatus::NotLeader);
  role_ = Role::Candidate;
  ++term_;
  voted_for_ = id_;
  votes_ = {id_};
  reset_election_timer();
  if (static_cast<int>(votes_.size()) >= majority()) {
    become_leader();
    return;
  }
  RequestVote rv{term_, id_, log_.last_index(), log_.last_term(), transfer};
  for (NodeId p = 0; p < n_; ++p) {
    if (p != id_) send(p, TrafficClass::Election, rv);
  }
}

void RaftNode::fail_pending(OpStatus status) {
  auto writes = std::move(pending_writes_);
  auto reads = std::move(pending_reads_);
  auto parked = std::move(parked_reads_);
  pending_writes_.clear();
  pending_reads_.clear();
  parked_reads_.clear();
  for (auto& [idx, cbs] : writes) {
    for (auto& cb : cbs) cb(WriteResult{status, {}});
  }
  for (auto& [id, r] : reads) r.done(ReadResult{status, {}, {}});
  for (auto& r : parked) r.done(ReadResult{status, {}, {}});
}

void RaftNode::become_follower(Term term) {
  if (term > term_) {
    term_ = term;
    voted_for_.reset();
  }
  if (role_ != Role::Follower) {
    bool was_leader = role_ == Role::Leader;
    role_ = Role::Follower;
    if (heartbeat_timer_) ctx_.loop->cancel(*heartbeat_timer_);
    if (lease_timer_) ctx_.loop->cancel(*lease_timer_);
    heartbeat_timer_.reset();
    lease_timer_.reset();
    relinquishing_ = false;
    limbo_low_ = limbo_high_ = 0;
    limbo_keys_.clear();
    if (was_leader || !election_timer_) reset_election_timer();
  }
  fail_pending(OpStatus::NotLeader);
}

void RaftNode::become_leader() {
  role_ = Role::Leader;
  relinquishing_ = false;
  end_lease_index_ = 0;
  if (election_timer_) ctx_.loop->cancel(*election_timer_);
  election_timer_.reset();

  Index last = log_.last_index();
  limbo_low_ = commit_index_ + 1;
  limbo_high_ = last;
  limbo_keys_.clear();
  for (Index i = limbo_low_; i <= limbo_high_; ++i) {
    if (const auto* a = std::get_if<ListAppend>(&log_.at(i).command)) limbo_keys_.insert(a->key);
  }
  last_prev_term_index_ = last;
  prior_lease_latest_ = SimTime{};
  for (Index i = 1; i <= last; ++i) {
    prior_lease_latest_ = std::max(prior_lease_latest_, log_.at(i).write_time.latest);
  }
  prior_lease_expired_ = config_.kind != MechanismKind::LeaseGuard || last == 0;
  own_term_committed_ = false;

  for (NodeId p = 0; p < n_; ++p) {
    next_index_[p] = last + 1;
    match_index_[p] = 0;
    sent_index_[p] = last;
    ongaro_s_[p].reset();
  }
  if (ctx_.observer) ctx_.observer->on_elected(*this);

  append_own(Noop{});
  replicate_new_entries();
  heartbeat_timer_ = ctx_.loop->schedule(config_.heartbeat, [this] { heartbeat_tick(); });
  advance_commit();
}

Index RaftNode::append_own(Command command) {
  LogEntry e{term_, log_.last_index() + 1, std::move(command), reading(), now()};
  log_.append(std::move(e), now());
  match_index_[id_] = log_.last_index();
  return log_.last_index();
}

void RaftNode::send_append(NodeId peer, Index from) {
  AppendEntries ae;
  ae.term = term_;
  ae.leader = id_;
  ae.prev_index = from - 1;
  ae.prev_term = log_.term_at(from - 1);
  Index upto = std::min<Index>(log_.last_index(), from - 1 + config_.max_batch);
  for (Index i = from; i <= upto; ++i) ae.entries.push_back(log_.at(i));
  ae.leader_commit = commit_index_;
  ae.sent_at = reading();
  sent_index_[peer] = std::max(sent_index_[peer], upto);
  send(peer, TrafficClass::Replication, std::move(ae));
}

void RaftNode::replicate_new_entries() {
  Index last = log_.last_index();
  for (NodeId p = 0; p < n_; ++p) {
    if (p == id_) continue;
    Index sent = sent_index_[p];
    if (sent < last && sent + 1 >= next_index_[p] && last - sent <= config_.max_batch) {
      send_append(p, sent + 1);
    }
  }
}

void RaftNode::broadcast_heartbeat() {
  for (NodeId p = 0; p < n_; ++p) {
    if (p != id_) send_append(p, next_index_[p]);
  }
}

void RaftNode::heartbeat_tick() {
  heartbeat_timer_.reset();
  if (!alive_ || role_ != Role::Leader) return;
  if (config_.kind == MechanismKind::LeaseGuard && config_.lease_maintenance && !relinquishing_) {
    const auto& newest = log_.at(log_.last_index());
    if (is_older_than(newest.write_time, config_.effective_noop_period(), reading())) {
      append_own(Noop{});
    }
  }
  broadcast_heartbeat();
  heartbeat_timer_ = ctx_.loop->schedule(config_.heartbeat, [this] { heartbeat_tick(); });
  advance_commit();
}

bool RaftNode::prior_lease_expired() {
  if (prior_lease_expired_) return true;
  if (last_prev_term_index_ == 0) {
    prior_lease_expired_ = true;
  } else if (std::holds_alternative<EndLease>(log_.at(last_prev_term_index_).command) &&
             last_prev_term_index_ <= commit_index_) {
    prior_lease_expired_ = true;
  } else if (config_.clock_mode == ClockMode::Interval) {
    TimeInterval prior{prior_lease_latest_, prior_lease_latest_};
    prior_lease_expired_ = is_older_than(prior, config_.delta, reading());
  } else {
    // Entries arrive in index order, so the newest prior-term entry has the
    // youngest timer.
    prior_lease_expired_ = timer_for(last_prev_term_index_).elapsed(now()) > config_.delta + config_.epsilon;
  }
  return prior_lease_expired_;
}

void RaftNode::schedule_lease_recheck() {
  if (lease_timer_) return;
  SimTime when;
  if (config_.clock_mode == ClockMode::Interval) {
    Duration remaining = prior_lease_latest_ + config_.delta - last_reading_.earliest;
    when = now() + std::max(remaining, Duration::zero()) + std::chrono::microseconds(1);
  } else {
    when = timer_for(last_prev_term_index_).when_reads(config_.delta + config_.epsilon) + Duration{1};
  }
  when = std::max(when, now() + std::chrono::microseconds(1));
  lease_timer_ = ctx_.loop->schedule_at(when, [this] {
    lease_timer_.reset();
    advance_commit();
  });
}

void RaftNode::advance_commit() {
  if (!alive_ || role_ != Role::Leader) return;
  std::vector<Index> matches = match_index_;
  matches[id_] = log_.last_index();
  std::sort(matches.begin(), matches.end(), std::greater<>());
  Index n = matches[majority() - 1];
  // Raft counts replicas only for entries of the current term.
  while (n > commit_index_ && log_.term_at(n) != term_) --n;
  if (n <= commit_index_) return;
  if (!prior_lease_expired()) {
    schedule_lease_recheck();
    return;
  }
  Index old = commit_index_;
  set_commit(n);
  after_commit(old);
}

void RaftNode::set_commit(Index c) {
  if (c <= commit_index_) return;
  commit_index_ = std::min(c, log_.last_index());
  apply_committed();
}

void RaftNode::apply_committed() {
  while (last_applied_ < commit_index_) {
    ++last_applied_;
    if (const auto* a = std::get_if<ListAppend>(&log_.at(last_applied_).command)) {
      kv_[a->key].push_back(a->value);
    }
  }
}

void RaftNode::after_commit(Index old_commit) {
  if (ctx_.observer) ctx_.observer->on_commit(*this, old_commit);
  if (!own_term_committed_ && log_.term_at(commit_index_) == term_) {
    own_term_committed_ = true;
    limbo_low_ = limbo_high_ = 0;
    limbo_keys_.clear();
    auto parked = std::move(parked_reads_);
    parked_reads_.clear();
    for (auto& r : parked) {
      r.snapshot = kv_[r.key];
      r.exec_time = now();
      start_read_check(std::move(r));
    }
  }
  while (!pending_writes_.empty() && pending_writes_.begin()->first <= commit_index_) {
    auto cbs = std::move(pending_writes_.begin()->second);
    pending_writes_.erase(pending_writes_.begin());
    for (auto& cb : cbs) cb(WriteResult{OpStatus::Ok, now()});
    if (role_ != Role::Leader) return;
  }
  if (relinquishing_ && end_lease_index_ != 0 && commit_index_ >= end_lease_index_) handover();
}

void RaftNode::handover() {
  broadcast_heartbeat();
  std::optional<NodeId> target;
  for (NodeId p = 0; p < n_; ++p) {
    if (p != id_ && match_index_[p] == log_.last_index()) {
      target = p;
      break;
    }
  }
  if (target) send(*target, TrafficClass::Election, TimeoutNow{term_, commit_index_});
  become_follower(term_);
}

void RaftNode::relinquish() {
  if (!alive_ || role_ != Role::Leader || relinquishing_) return;
  relinquishing_ = true;
  end_lease_index_ = append_own(EndLease{});
  replicate_new_entries();
  advance_commit();
}

void RaftNode::client_write(Command command, WriteCallback done) {
  if (!alive_) return;
  if (role_ != Role::Leader || relinquishing_) {
    done(WriteResult{OpStatus::NotLeader, {}});
    return;
  }
  if (config_.kind == MechanismKind::LeaseGuard && !config_.defer_commit && !prior_lease_expired()) {
    done(WriteResult{OpStatus::NoLease, {}});
    return;
  }
  Index idx = append_own(std::move(command));
  pending_writes_[idx].push_back(std::move(done));
  replicate_new_entries();
  advance_commit();
}

void RaftNode::client_write_batch(std::vector<Command> commands, const WriteCallback& done) {
  if (!alive_) return;
  if (role_ != Role::Leader || relinquishing_) {
    for (std::size_t i = 0; i < commands.size(); ++i) done(WriteResult{OpStatus::NotLeader, {}});
    return;
  }
  for (auto& c : commands) pending_writes_[append_own(std::move(c))].push_back(done);
  replicate_new_entries();
  advance_commit();
}

void RaftNode::serve_read(const std::string& key, ReadCallback& done, SimTime exec_time) {
  auto it = kv_.find(key);
  ReadResult r{OpStatus::Ok, it == kv_.end() ? std::vector<std::string>{} : it->second, exec_time};
  if (ctx_.observer) ctx_.observer->on_read_served(*this, key);
  done(r);
}

bool RaftNode::leaseguard_read_allowed(const std::string& key, OpStatus& why) {
  why = OpStatus::NoLease;
  if (commit_index_ == 0) return false;
  const auto& e = log_.at(commit_index_);
  if (config_.clock_mode == ClockMode::DriftTimer) {
    if (e.term != term_) return false;
    return timer_for(commit_index_).elapsed_less_than(now(), config_.delta - config_.epsilon);
  }
  if (e.term != term_ && std::holds_alternative<EndLease>(e.command)) return false;
  if (!is_within_age(e.write_time, config_.delta, reading())) return false;
  if (e.term != term_) {
    if (!config_.inherited_reads) return false;
    if (limbo_keys_.count(key)) {
      why = OpStatus::LimboConflict;
      return false;
    }
  }
  return true;
}

bool RaftNode::ongaro_has_lease() {
  if (!own_term_committed_) return false;
  TimeInterval t = reading();
  int fresh = 1;
  for (NodeId p = 0; p < n_; ++p) {
    if (p != id_ && ongaro_s_[p] && t.latest < ongaro_s_[p]->earliest + config_.election_timeout) {
      ++fresh;
    }
  }
  return fresh >= majority();
}

void RaftNode::client_read(const std::string& key, ReadCallback done) {
  if (!alive_) return;
  if (role_ != Role::Leader || relinquishing_) {
    done(ReadResult{OpStatus::NotLeader, {}, {}});
    return;
  }
  switch (config_.kind) {
    case MechanismKind::Inconsistent:
      serve_read(key, done, now());
      return;
    case MechanismKind::Quorum: {
      PendingRead r{key, std::move(done), {}, now(), {}};
      if (!own_term_committed_) {
        parked_reads_.push_back(std::move(r));
        return;
      }
      r.snapshot = kv_[key];
      start_read_check(std::move(r));
      return;
    }
    case MechanismKind::OngaroLease:
      if (ongaro_has_lease()) {
        serve_read(key, done, now());
      } else {
        done(ReadResult{OpStatus::NoLease, {}, {}});
      }
      return;
    case MechanismKind::LeaseGuard: {
      OpStatus why;
      if (leaseguard_read_allowed(key, why)) {
        serve_read(key, done, now());
      } else {
        done(ReadResult{why, {}, {}});
      }
      return;
    }
  }
}

void RaftNode::start_read_check(PendingRead read) {
  read.acks = {id_};
  std::uint64_t rid = next_read_id_++;
  if (static_cast<int>(read.acks.size()) >= majority()) {
    if (ctx_.observer) ctx_.observer->on_read_served(*this, read.key);
    read.done(ReadResult{OpStatus::Ok, std::move(read.snapshot), read.exec_time});
    return;
  }
  pending_reads_.emplace(rid, std::move(read));
  for (NodeId p = 0; p < n_; ++p) {
    if (p != id_) send(p, TrafficClass::ReadCheck, ReadCheck{term_, rid});
  }
}

bool RaftNode::heard_from_leader_recently() {
  if (role_ == Role::Leader) return true;
  if (!last_heard_leader_) return false;
  return !is_older_than(*last_heard_leader_, config_.election_timeout, reading());
}

void RaftNode::receive(NodeId from, const Message& msg) {
  if (!alive_) return;
  std::visit(overloaded{[&](const RequestVote& m) { on_request_vote(from, m); },
                        [&](const RequestVoteReply& m) { on_request_vote_reply(from, m); },
                        [&](const AppendEntries& m) { on_append_entries(from, m); },
                        [&](const AppendEntriesReply& m) { on_append_entries_reply(from, m); },
                        [&](const ReadCheck& m) { on_read_check(from, m); },
                        [&](const ReadCheckReply& m) { on_read_check_reply(from, m); },
                        [&](const TimeoutNow& m) { on_timeout_now(from, m); }},
             msg);
}

void RaftNode::on_request_vote(NodeId from, const RequestVote& m) {
  if (config_.kind == MechanismKind::OngaroLease && !m.transfer && m.term > term_ &&
      heard_from_leader_recently()) {
    // A live leader may hold a lease; neither vote nor adopt the term.
    send(from, TrafficClass::Election, RequestVoteReply{term_, false});
    return;
  }
  if (m.term > term_) become_follower(m.term);
  bool up_to_date = m.last_log_term > log_.last_term() ||
                    (m.last_log_term == log_.last_term() && m.last_log_index >= log_.last_index());
  bool grant = m.term == term_ && (!voted_for_ || *voted_for_ == m.candidate) && up_to_date;
  if (grant) {
    voted_for_ = m.candidate;
    reset_election_timer();
  }
  send(from, TrafficClass::Election, RequestVoteReply{term_, grant});
}

void RaftNode::on_request_vote_reply(NodeId from, const RequestVoteReply& m) {
  if (m.term > term_) {
    become_follower(m.term);
    return;
  }
  if (role_ != Role::Candidate || m.term != term_ || !m.granted) return;
  votes_.insert(from);
  if (static_cast<int>(votes_.size()) >= majority()) become_leader();
}

void RaftNode::on_append_entries(NodeId from, const AppendEntries& m) {
  AppendEntriesReply reply;
  reply.rpc_start = m.sent_at;
  if (m.term < term_) {
    reply.term = term_;
    send(from, TrafficClass::Replication, reply);
    return;
  }
  if (m.term > term_ || role_ != Role::Follower) become_follower(m.term);
  reset_election_timer();
  last_heard_leader_ = reading();
  reply.term = term_;

  if (m.prev_index > log_.last_index() || log_.term_at(m.prev_index) != m.prev_term) {
    if (m.prev_index > log_.last_index()) {
      reply.conflict_hint = log_.last_index() + 1;
    } else {
      Term bad = log_.term_at(m.prev_index);
      Index i = m.prev_index;
      while (i > 1 && log_.term_at(i - 1) == bad && i - 1 > commit_index_) --i;
      reply.conflict_hint = std::max<Index>(i, 1);
    }
    send(from, TrafficClass::Replication, reply);
    return;
  }
  for (const auto& e : m.entries) {
    if (e.index <= log_.last_index()) {
      if (log_.term_at(e.index) == e.term) continue;
      if (e.index <= commit_index_) throw std::logic_error("truncating committed entry");
      log_.truncate_from(e.index);
    }
    log_.append(e, now());
  }
  Index last_new = m.prev_index + m.entries.size();
  if (m.leader_commit > commit_index_) {
    Index old = commit_index_;
    set_commit(std::min(m.leader_commit, last_new));
    if (commit_index_ > old && ctx_.observer) ctx_.observer->on_commit(*this, old);
  }
  reply.success = true;
  reply.match_index = last_new;
  send(from, TrafficClass::Replication, reply);
}

void RaftNode::on_append_entries_reply(NodeId from, const AppendEntriesReply& m) {
  if (m.term > term_) {
    become_follower(m.term);
    return;
  }
  if (role_ != Role::Leader || m.term != term_) return;
  if (m.success) {
    match_index_[from] = std::max(match_index_[from], m.match_index);
    next_index_[from] = std::max(next_index_[from], match_index_[from] + 1);
    if (config_.kind == MechanismKind::OngaroLease &&
        (!ongaro_s_[from] || ongaro_s_[from]->earliest < m.rpc_start.earliest)) {
      ongaro_s_[from] = m.rpc_start;
    }
    advance_commit();
    if (role_ != Role::Leader) return;
    Index last = log_.last_index();
    if (sent_index_[from] < last) {
      send_append(from, std::max(next_index_[from], sent_index_[from] + 1));
    }
  } else {
    Index hint = std::max<Index>(m.conflict_hint, 1);
    next_index_[from] = std::max(match_index_[from] + 1, std::min(next_index_[from] - 1, hint));
    next_index_[from] = std::max<Index>(next_index_[from], 1);
    sent_index_[from] = next_index_[from] - 1;
    send_append(from, next_index_[from]);
  }
}

void RaftNode::on_read_check(NodeId from, const ReadCheck& m) {
  if (m.term > term_) become_follower(m.term);
  send(from, TrafficClass::ReadCheck, ReadCheckReply{term_, m.id, m.term == term_});
}

void RaftNode::on_read_check_reply(NodeId from, const ReadCheckReply& m) {
  if (m.term > term_) {
    become_follower(m.term);
    return;
  }
  if (role_ != Role::Leader || m.term != term_ || !m.ok) return;
  auto it = pending_reads_.find(m.id);
  if (it == pending_reads_.end()) return;
  it->second.acks.insert(from);
  if (static_cast<int>(it->second.acks.size()) >= majority()) {
    PendingRead r = std::move(it->second);
    pending_reads_.erase(it);
    if (ctx_.observer) ctx_.observer->on_read_served(*this, r.key);
    r.done(ReadResult{OpStatus::Ok, std::move(r.snapshot), r.exec_time});
  }
}

void RaftNode::on_timeout_now(NodeId, const TimeoutNow& m) {
  if (m.term < term_ || role_ == Role::Leader) return;
  if (m.leader_commit > commit_index_ && m.term == term_) {
    Index old = commit_index_;
    set_commit(std::min(m.leader_commit, log_.last_index()));
    if (commit_index_ > old && ctx_.observer) ctx_.observer->on_commit(*this, old);
  }
  start_election(true);
}

void RaftNode::crash() {
  if (!alive_) return;
  alive_ = false;
  ++incarnation_;
  cancel_timers();
  pending_writes_.clear();
  pending_reads_.clear();
  parked_reads_.clear();
  role_ = Role::Follower;
  commit_index_ = 0;
  last_applied_ = 0;
  kv_.clear();
  votes_.clear();
  last_heard_leader_.reset();
  limbo_low_ = limbo_high_ = 0;
  limbo_keys_.clear();
  relinquishing_ = false;
  own_term_committed_ = false;
}

void RaftNode::restart() {
  if (alive_) return;
  alive_ = true;
  log_.reset_received(now());
  // Assume a leader was heard just now; a restarted node must not help
  // depose a leader whose lease it may have granted.
  last_heard_leader_ = reading();
  reset_election_timer();
}

std::string RaftNode::dump_state() const {
  std::ostringstream out;
  out << "node " << id_ << " role=" << to_string(role_) << " term=" << term_
      << " commit=" << commit_index_ << " applied=" << last_applied_ << '\n'
      << log_.dump();
  return out.str();
}

}  // namespace lgsim
