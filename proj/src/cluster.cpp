#include "lgsim/cluster.hpp"

#include <algorithm>
#include <stdexcept>

namespace lgsim {

std::string to_string(ClusterEvent::Kind k) {
  switch (k) {
    case ClusterEvent::Kind::Elected:
      return "elected";
    case ClusterEvent::Kind::LeaseAcquired:
      return "lease_acquired";
    case ClusterEvent::Kind::Crashed:
      return "crashed";
    case ClusterEvent::Kind::Restarted:
      return "restarted";
    case ClusterEvent::Kind::ClockBroken:
      return "clock_broken";
    case ClusterEvent::Kind::Partitioned:
      return "partitioned";
    case ClusterEvent::Kind::Healed:
      return "healed";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// InvariantMonitor

InvariantMonitor::InvariantMonitor(const Cluster& cluster)
    : cluster_(cluster), leaders_(cluster.size()), applied_seen_(cluster.size(), 0) {}

SimTime InvariantMonitor::now() const { return cluster_.loop().now(); }

bool InvariantMonitor::clocks_healthy() const { return !cluster_.any_clock_broken(); }

void InvariantMonitor::fail(const std::string& invariant, const std::string& detail) {
  violations_.push_back({now(), invariant, detail});
}

void InvariantMonitor::check_completeness(const RaftNode& n) {
  for (const auto& [term, rec] : committed_by_term_) {
    if (term >= n.term()) break;
    auto [idx, hash] = rec;
    if (n.log().last_index() < idx || n.log().prefix_hash(idx) != hash) {
      fail("leader_completeness", "leader " + std::to_string(n.id()) + " of term " +
                                      std::to_string(n.term()) + " lacks entry " +
                                      std::to_string(idx) + " committed in term " +
                                      std::to_string(term));
    }
  }
}

void InvariantMonitor::on_elected(const RaftNode& n) {
  auto [it, fresh] = leader_of_term_.emplace(n.term(), n.id());
  if (!fresh && it->second != n.id()) {
    fail("election_safety", "term " + std::to_string(n.term()) + " has leaders " +
                                std::to_string(it->second) + " and " + std::to_string(n.id()));
  }
  check_completeness(n);

  LeaderView v;
  v.term = n.term();
  const auto& log = n.log();
  v.last = log.last_index();
  v.hash = log.prefix_hash(v.last);
  for (Index i = 1; i <= log.last_index(); ++i) {
    const auto& e = log.at(i);
    if (e.term >= n.term()) continue;
    v.last_prior = i;
    v.max_prior_latest = std::max(v.max_prior_latest, e.write_time.latest);
    v.max_prior_origin = std::max(v.max_prior_origin, e.origin_time);
    if (i > n.commit_index()) {
      if (const auto* a = std::get_if<ListAppend>(&e.command)) v.limbo_keys.insert(a->key);
    }
  }
  leaders_[n.id()] = std::move(v);
}

void InvariantMonitor::on_commit(const RaftNode& n, Index old_commit) {
  if (n.role() != Role::Leader) return;
  auto& view = leaders_[n.id()];
  if (!view || view->term != n.term()) return;
  const auto& cfg = n.config();

  if (cfg.kind == MechanismKind::LeaseGuard && view->last_prior > 0) {
    Index lp = view->last_prior;
    bool handed_over = std::holds_alternative<EndLease>(n.log().at(lp).command) &&
                       lp <= applied_hash_.size() && applied_hash_[lp - 1] == n.log().prefix_hash(lp);
    if (!handed_over) {
      if (cfg.clock_mode == ClockMode::Interval) {
        TimeInterval prior{view->max_prior_latest, view->max_prior_latest};
        if (!is_older_than(prior, cfg.delta, n.last_reading())) {
          fail("commit_guard", "leader " + std::to_string(n.id()) + " committed " +
                                   std::to_string(n.commit_index()) +
                                   " while a prior-term entry was not older than delta");
        }
      }
      if (clocks_healthy() && now() - view->max_prior_origin < cfg.delta) {
        fail("commit_guard", "leader " + std::to_string(n.id()) + " committed " +
                                 std::to_string(n.commit_index()) +
                                 " within delta of a prior-term entry's creation");
      }
    }
  }

  Index c = n.commit_index();
  auto& rec = committed_by_term_[n.term()];
  if (c > rec.first) rec = {c, n.log().prefix_hash(c)};
  for (NodeId id = 0; id < cluster_.size(); ++id) {
    const auto& other = cluster_.node(id);
    if (other.is_leader() && other.term() > n.term()) check_completeness(other);
  }
  (void)old_commit;
}

void InvariantMonitor::on_read_served(const RaftNode& n, const std::string& key) {
  if (n.config().kind != MechanismKind::LeaseGuard || n.role() != Role::Leader) return;
  const auto& view = leaders_[n.id()];
  if (!view || view->term != n.term()) return;
  if (n.log().term_at(n.commit_index()) != n.term() && view->limbo_keys.count(key)) {
    fail("limbo_read_guard", "leader " + std::to_string(n.id()) + " served key " + key +
                                 " written in its limbo region");
  }
}

void InvariantMonitor::on_crash(NodeId id) {
  leaders_[id].reset();
  applied_seen_[id] = 0;
}

void InvariantMonitor::after_event() {
  int n = cluster_.size();
  for (NodeId id = 0; id < n; ++id) {
    const auto& node = cluster_.node(id);
    const auto& log = node.log();

    // Log Matching on every index touched since the last event.
    Index dirty = log.take_dirty_from();
    if (dirty != 0) {
      for (Index i = dirty; i <= log.last_index(); ++i) {
        for (NodeId o = 0; o < n; ++o) {
          if (o == id) continue;
          const auto& olog = cluster_.node(o).log();
          if (olog.last_index() >= i && olog.term_at(i) == log.term_at(i) &&
              olog.prefix_hash(i) != log.prefix_hash(i)) {
            fail("log_matching", "nodes " + std::to_string(id) + " and " + std::to_string(o) +
                                     " agree on term at " + std::to_string(i) +
                                     " but differ before it");
          }
        }
      }
    }

    // Leader Append-Only.
    auto& view = leaders_[id];
    if (view) {
      if (node.is_leader() && node.term() == view->term) {
        if (log.last_index() < view->last || log.prefix_hash(view->last) != view->hash) {
          fail("leader_append_only", "leader " + std::to_string(id) + " rewrote its log");
        }
        view->last = log.last_index();
        view->hash = log.prefix_hash(view->last);
      } else if (!node.is_leader() || node.term() != view->term) {
        view.reset();
      }
    }

    // Election Safety (also checked at election time).
    if (node.is_leader()) {
      auto it = leader_of_term_.find(node.term());
      if (it != leader_of_term_.end() && it->second != id) {
        fail("election_safety", "two leaders in term " + std::to_string(node.term()));
      }
    }

    // State Machine Safety.
    if (node.last_applied() < applied_seen_[id]) applied_seen_[id] = 0;
    for (Index i = applied_seen_[id] + 1; i <= node.last_applied(); ++i) {
      std::uint64_t h = log.prefix_hash(i);
      if (applied_hash_.size() < i) {
        applied_hash_.push_back(h);
      } else if (applied_hash_[i - 1] != h) {
        fail("state_machine_safety", "node " + std::to_string(id) + " applied a different entry at " +
                                         std::to_string(i));
      }
    }
    applied_seen_[id] = node.last_applied();
  }
}

// ---------------------------------------------------------------------------
// Cluster

Cluster::Cluster(ClusterConfig config) : config_(std::move(config)), master_(config_.seed) {
  if (config_.n_nodes < 1) throw std::invalid_argument("cluster.nodes must be positive");
  config_.mechanism.validate();
  net_ = std::make_unique<Network<Message>>(loop_, config_.net, config_.n_nodes, master_);
  for (NodeId id = 0; id < config_.n_nodes; ++id) {
    std::string name = "node" + std::to_string(id);
    NodeContext ctx;
    ctx.loop = &loop_;
    ctx.observer = this;
    ctx.send = [this, id](NodeId to, TrafficClass cls, Message msg) {
      net_->send(id, to, cls, std::move(msg));
    };
    double drift = id < static_cast<NodeId>(config_.drift_rates.size()) ? config_.drift_rates[id] : 0.0;
    nodes_.push_back(std::make_unique<RaftNode>(
        id, config_.n_nodes, config_.mechanism, std::move(ctx),
        IntervalClock(config_.clock, master_.derive(name + "/clock")), drift,
        master_.derive(name + "/raft")));
    net_->set_handler(id, [this](Envelope<Message>&& env) { nodes_[env.to]->receive(env.from, env.payload); });
  }
  if (config_.check_invariants) {
    monitor_ = std::make_unique<InvariantMonitor>(*this);
    loop_.set_post_event_hook([this] { monitor_->after_event(); });
  }
}

Cluster::~Cluster() = default;

void Cluster::start() {
  for (NodeId id = 0; id < size(); ++id) nodes_[id]->start(id == 0);
  if (monitor_) monitor_->after_event();
}

std::optional<NodeId> Cluster::leader() const {
  std::optional<NodeId> best;
  for (NodeId id = 0; id < size(); ++id) {
    const auto& n = *nodes_[id];
    if (n.is_leader() && (!best || n.term() > nodes_[*best]->term())) best = id;
  }
  return best;
}

void Cluster::submit_write(NodeId target, Command command, WriteCallback done) {
  loop_.schedule(config_.client_latency, [this, target, command = std::move(command),
                                          done = std::move(done)]() mutable {
    auto& n = *nodes_.at(target);
    if (!n.alive()) return;
    n.client_write(std::move(command), [this, target, done](const WriteResult& r) {
      if (!nodes_[target]->alive()) return;
      loop_.schedule(config_.client_latency, [done, r] { done(r); });
    });
  });
}

void Cluster::submit_read(NodeId target, const std::string& key, ReadCallback done) {
  loop_.schedule(config_.client_latency, [this, target, key, done = std::move(done)]() mutable {
    auto& n = *nodes_.at(target);
    if (!n.alive()) return;
    n.client_read(key, [this, target, done](const ReadResult& r) {
      if (!nodes_[target]->alive()) return;
      loop_.schedule(config_.client_latency, [done, r] { done(r); });
    });
  });
}

std::vector<NodeId> Cluster::resolve(const NodeRef& ref, const std::vector<NodeId>& exclude) {
  std::vector<NodeId> out;
  auto excluded = [&](NodeId id) { return std::find(exclude.begin(), exclude.end(), id) != exclude.end(); };
  switch (ref.kind) {
    case NodeRef::Kind::Id:
      out.push_back(ref.id);
      break;
    case NodeRef::Kind::Leader:
      if (auto l = leader()) out.push_back(*l);
      break;
    case NodeRef::Kind::LastCrashed:
      if (last_crashed_) out.push_back(*last_crashed_);
      break;
    case NodeRef::Kind::Others:
      for (NodeId id = 0; id < size(); ++id) out.push_back(id);
      break;
  }
  out.erase(std::remove_if(out.begin(), out.end(), excluded), out.end());
  return out;
}

void Cluster::crash_node(NodeId id) {
  if (!nodes_[id]->alive()) return;
  nodes_[id]->crash();
  net_->crash(id);
  last_crashed_ = id;
  if (monitor_) monitor_->on_crash(id);
  events_.push_back({ClusterEvent::Kind::Crashed, loop_.now(), id, nodes_[id]->term()});
}

void Cluster::restart_node(NodeId id) {
  if (nodes_[id]->alive()) return;
  net_->restart(id);
  nodes_[id]->restart();
  events_.push_back({ClusterEvent::Kind::Restarted, loop_.now(), id, nodes_[id]->term()});
}

std::uint64_t Cluster::cut(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  events_.push_back({ClusterEvent::Kind::Partitioned, loop_.now(), a.empty() ? -1 : a.front(), 0});
  return net_->partition(a, b);
}

void Cluster::heal(std::uint64_t partition) {
  net_->heal(partition);
  events_.push_back({ClusterEvent::Kind::Healed, loop_.now(), -1, 0});
}

void Cluster::break_clock(NodeId id, Duration lag) {
  nodes_[id]->clock().break_at(loop_.now(), lag);
  clock_broken_ = true;
  events_.push_back({ClusterEvent::Kind::ClockBroken, loop_.now(), id, nodes_[id]->term()});
}

void Cluster::limbo_burst(NodeId leader, int count) {
  if (limbo_handler_) limbo_handler_(leader, count);
}

void Cluster::on_elected(const RaftNode& n) {
  std::uint64_t limbo = n.limbo_high() >= n.limbo_low() ? n.limbo_high() - n.limbo_low() + 1 : 0;
  events_.push_back({ClusterEvent::Kind::Elected, loop_.now(), n.id(), n.term(), limbo});
  if (monitor_) monitor_->on_elected(n);
}

void Cluster::on_commit(const RaftNode& n, Index old_commit) {
  if (n.role() == Role::Leader) {
    const auto& log = n.log();
    for (Index i = old_commit + 1; i <= n.commit_index(); ++i) {
      if (const auto* a = std::get_if<ListAppend>(&log.at(i).command)) {
        first_commit_.emplace(a->value, loop_.now());
      }
    }
    if (log.term_at(n.commit_index()) == n.term() && log.term_at(old_commit) != n.term()) {
      events_.push_back({ClusterEvent::Kind::LeaseAcquired, loop_.now(), n.id(), n.term()});
    }
  }
  if (monitor_) monitor_->on_commit(n, old_commit);
}

void Cluster::on_read_served(const RaftNode& n, const std::string& key) {
  if (monitor_) monitor_->on_read_served(n, key);
}

const std::vector<Violation>& Cluster::violations() const {
  static const std::vector<Violation> none;
  return monitor_ ? monitor_->violations() : none;
}

std::optional<SimTime> Cluster::first_commit(const std::string& value) const {
  auto it = first_commit_.find(value);
  if (it == first_commit_.end()) return std::nullopt;
  return it->second;
}

}  // namespace lgsim
