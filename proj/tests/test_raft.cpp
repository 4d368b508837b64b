#include <gtest/gtest.h>

#include "lgsim/cluster.hpp"
#include "support/scenarios.hpp"

using namespace lgsim;
using namespace lgsim::testing;
using namespace std::chrono_literals;

namespace {

/// A single node driven by hand; outgoing messages are captured.
struct Solo {
  EventLoop loop;
  std::vector<std::pair<NodeId, Message>> sent;
  std::unique_ptr<RaftNode> node;

  explicit Solo(MechanismConfig m = {}, NodeId id = 0) {
    NodeContext ctx;
    ctx.loop = &loop;
    ctx.send = [this](NodeId to, TrafficClass, Message msg) { sent.emplace_back(to, std::move(msg)); };
    ClockConfig clock;
    clock.max_error = 0ns;
    node = std::make_unique<RaftNode>(id, 3, m, ctx, IntervalClock(clock, Rng(1)), 0.0, Rng(2));
    node->start(false);
  }

  template <class T>
  std::vector<T> sent_of() const {
    std::vector<T> out;
    for (const auto& [to, m] : sent) {
      if (const auto* x = std::get_if<T>(&m)) out.push_back(*x);
    }
    return out;
  }

  LogEntry entry(Term term, Index index, const std::string& key) {
    LogEntry e;
    e.term = term;
    e.index = index;
    e.command = ListAppend{key, "v" + std::to_string(index)};
    e.write_time = {loop.now(), loop.now()};
    e.origin_time = loop.now();
    return e;
  }

  AppendEntries append(Term term, Index prev, Term prev_term, std::vector<LogEntry> entries, Index commit) {
    AppendEntries ae;
    ae.term = term;
    ae.leader = 1;
    ae.prev_index = prev;
    ae.prev_term = prev_term;
    ae.entries = std::move(entries);
    ae.leader_commit = commit;
    ae.sent_at = {loop.now(), loop.now()};
    return ae;
  }

  std::optional<ReadResult> read(const std::string& key) {
    std::optional<ReadResult> out;
    node->client_read(key, [&](const ReadResult& r) { out = r; });
    return out;
  }
};

}  // namespace

TEST(AppendEntries, StaleTermRejectedWithResponderTerm) {
  Solo s;
  s.node->receive(1, s.append(5, 0, 0, {}, 0));
  s.sent.clear();
  s.node->receive(2, s.append(3, 0, 0, {}, 0));
  auto replies = s.sent_of<AppendEntriesReply>();
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_FALSE(replies[0].success);
  EXPECT_EQ(replies[0].term, 5u);
  EXPECT_EQ(s.node->term(), 5u);
}

TEST(AppendEntries, FollowerLearnsCommitFromALaterMessage) {
  Solo s;
  s.node->receive(1, s.append(1, 0, 0, {s.entry(1, 1, "a"), s.entry(1, 2, "b")}, 0));
  EXPECT_EQ(s.node->log().last_index(), 2u);
  EXPECT_EQ(s.node->commit_index(), 0u);
  EXPECT_TRUE(s.node->kv().empty());
  s.node->receive(1, s.append(1, 2, 1, {}, 2));
  EXPECT_EQ(s.node->commit_index(), 2u);
  EXPECT_EQ(s.node->last_applied(), 2u);
  EXPECT_EQ(s.node->kv().at("b"), (std::vector<std::string>{"v2"}));
}

TEST(AppendEntries, ConflictingSuffixIsReplaced) {
  Solo s;
  s.node->receive(1, s.append(1, 0, 0, {s.entry(1, 1, "a"), s.entry(1, 2, "b"), s.entry(1, 3, "c")}, 1));
  s.node->receive(1, s.append(2, 1, 1, {s.entry(2, 2, "x")}, 1));
  ASSERT_EQ(s.node->log().last_index(), 2u);
  EXPECT_EQ(s.node->log().at(2).term, 2u);
  EXPECT_EQ(std::get<ListAppend>(s.node->log().at(2).command).key, "x");
}

TEST(AppendEntries, MissingPrefixIsRejected) {
  Solo s;
  s.node->receive(1, s.append(1, 3, 1, {s.entry(1, 4, "d")}, 0));
  auto replies = s.sent_of<AppendEntriesReply>();
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_FALSE(replies[0].success);
  EXPECT_EQ(s.node->log().last_index(), 0u);
}

TEST(AppendEntries, DuplicateOrOldMessagesDoNotTruncate) {
  Solo s;
  s.node->receive(1, s.append(1, 0, 0, {s.entry(1, 1, "a"), s.entry(1, 2, "b")}, 0));
  s.node->receive(1, s.append(1, 0, 0, {s.entry(1, 1, "a")}, 0));
  EXPECT_EQ(s.node->log().last_index(), 2u);
}

TEST(RequestVote, StalerLogIsDenied) {
  Solo s;
  s.node->receive(1, s.append(2, 0, 0, {s.entry(1, 1, "a"), s.entry(2, 2, "b")}, 0));
  s.sent.clear();
  s.node->receive(2, RequestVote{3, 2, 5, 1, false});
  auto r = s.sent_of<RequestVoteReply>();
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FALSE(r[0].granted);
  EXPECT_EQ(s.node->term(), 3u);
  s.sent.clear();
  s.node->receive(2, RequestVote{4, 2, 1, 2, false});
  EXPECT_FALSE(s.sent_of<RequestVoteReply>().at(0).granted);
}

TEST(RequestVote, LeaseGuardVoterGrantsDespiteLiveLease) {
  Solo s;
  s.node->receive(1, s.append(1, 0, 0, {s.entry(1, 1, "a")}, 1));
  s.sent.clear();
  // Heard from leader 1 an instant ago, yet grants.
  s.node->receive(2, RequestVote{2, 2, 1, 1, false});
  auto r = s.sent_of<RequestVoteReply>();
  ASSERT_EQ(r.size(), 1u);
  EXPECT_TRUE(r[0].granted);
  EXPECT_EQ(s.node->voted_for(), std::optional<NodeId>(2));
}

TEST(RequestVote, OneVotePerTerm) {
  Solo s;
  s.node->receive(1, RequestVote{1, 1, 0, 0, false});
  s.node->receive(2, RequestVote{1, 2, 0, 0, false});
  auto r = s.sent_of<RequestVoteReply>();
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(r[0].granted);
  EXPECT_FALSE(r[1].granted);
}

namespace {

/// Node 0 holds six entries from term 1 with commit index 3, then wins term 2.
Solo& elect_with_limbo(Solo& s) {
  std::vector<LogEntry> entries;
  for (Index i = 1; i <= 6; ++i) entries.push_back(s.entry(1, i, "k" + std::to_string(i)));
  s.node->receive(1, s.append(1, 0, 0, entries, 3));
  s.loop.run_until(at(10ms));
  s.node->campaign();
  s.node->receive(1, RequestVoteReply{2, true});
  return s;
}

}  // namespace

TEST(Limbo, RegionSpansUncommittedPriorTermEntries) {
  Solo s;
  elect_with_limbo(s);
  ASSERT_TRUE(s.node->is_leader());
  EXPECT_EQ(s.node->commit_index(), 3u);
  EXPECT_EQ(s.node->limbo_low(), 4u);
  EXPECT_EQ(s.node->limbo_high(), 6u);
  EXPECT_EQ(s.node->limbo_keys(), (std::set<std::string>{"k4", "k5", "k6"}));
  EXPECT_EQ(s.node->last_prev_term_index(), 6u);
}

TEST(Limbo, ReadsOutsideTheRegionAreServedInsideRejected) {
  Solo s;
  elect_with_limbo(s);
  auto a = s.read("k2");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->status, OpStatus::Ok);
  EXPECT_EQ(a->values, (std::vector<std::string>{"v2"}));
  auto b = s.read("k5");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->status, OpStatus::LimboConflict);
  auto c = s.read("untouched");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->status, OpStatus::Ok);
  EXPECT_TRUE(c->values.empty());
}

TEST(Limbo, WithoutInheritedReadsNewLeaderRefusesAllReads) {
  MechanismConfig m;
  m.inherited_reads = false;
  Solo s(m);
  elect_with_limbo(s);
  auto a = s.read("k2");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->status, OpStatus::NoLease);
}

TEST(ClientOps, FollowerRefusesReadsAndWrites) {
  Harness h;
  NodeId follower = (*h.cluster().leader() + 1) % 3;
  std::optional<OpStatus> w;
  h.node(follower).client_write(ListAppend{"k", "v"}, [&](const WriteResult& r) { w = r.status; });
  EXPECT_EQ(w, OpStatus::NotLeader);
  EXPECT_EQ(h.read(follower, "k").status, OpStatus::NotLeader);
}

TEST(ClientOps, SteadyWriteAcksAfterOneRoundTrip) {
  Harness h;
  NodeId l = *h.cluster().leader();
  h.run_for(100ms);
  SimTime start = h.now();
  std::optional<WriteResult> got;
  SimTime acked{};
  h.node(l).client_write(ListAppend{"k", "v"}, [&](const WriteResult& r) {
    got = r;
    acked = h.now();
  });
  h.run_for(50ms);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->status, OpStatus::Ok);
  EXPECT_GT(acked - start, 100us);
  EXPECT_LT(acked - start, 2ms);
  EXPECT_EQ(got->commit_time, acked);
}

TEST(ClientOps, KvMatchesSequentialApplicationOfTheLog) {
  Harness h;
  NodeId l = *h.cluster().leader();
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    h.node(l).client_write(ListAppend{"k" + std::to_string(rng.uniform_int(0, 4)), "v" + std::to_string(i)},
                           [](const WriteResult&) {});
    h.run_for(Duration{rng.uniform_int(0, 2'000'000)});
  }
  h.run_for(200ms);
  for (NodeId id = 0; id < 3; ++id) {
    const auto& n = h.node(id);
    std::map<std::string, std::vector<std::string>> oracle;
    for (Index i = 1; i <= n.last_applied(); ++i) {
      if (const auto* a = std::get_if<ListAppend>(&n.log().at(i).command)) oracle[a->key].push_back(a->value);
    }
    EXPECT_EQ(n.kv(), oracle) << "node " << id;
    EXPECT_EQ(n.last_applied(), n.commit_index());
  }
  EXPECT_TRUE(h.cluster().violations().empty());
}

namespace {

struct Failover {
  Harness h;
  NodeId old_leader;
  NodeId leader;
  SimTime elected;
  SimTime prior_latest{};

  explicit Failover(MechanismConfig m = {}) : h(7, m) {
    old_leader = *h.cluster().leader();
    h.write(old_leader, "x", "w0");
    h.cluster().crash_node(old_leader);
    leader = h.await_new_leader(old_leader, "failover");
    elected = h.now();
    const auto& log = h.node(leader).log();
    for (Index i = 1; i <= log.last_index(); ++i) {
      if (log.at(i).term < h.node(leader).term()) prior_latest = std::max(prior_latest, log.at(i).write_time.latest);
    }
  }
};

}  // namespace

TEST(CommitGuard, MajorityAckedButPriorEntriesTooYoung) {
  Failover f;
  f.h.run_for(20ms);
  const auto& n = f.h.node(f.leader);
  Index last = n.log().last_index();
  int acked = 1;
  for (NodeId p = 0; p < 3; ++p) acked += p != f.leader && n.match_index(p) >= last;
  EXPECT_GE(acked, 2);
  EXPECT_LT(n.commit_index(), last);
  EXPECT_FALSE(n.own_term_committed());
}

TEST(CommitGuard, DeferredWriteAcknowledgedOnlyAfterOldLeaseExpires) {
  Failover f;
  std::optional<WriteResult> got;
  SimTime acked{};
  Index before = f.h.node(f.leader).log().last_index();
  f.h.node(f.leader).client_write(ListAppend{"y", "w1"}, [&](const WriteResult& r) {
    got = r;
    acked = f.h.now();
  });
  EXPECT_EQ(f.h.node(f.leader).log().last_index(), before + 1);
  f.h.run_until([&] { return got.has_value(); }, 3s, "deferred ack");
  EXPECT_EQ(got->status, OpStatus::Ok);
  EXPECT_GT(acked, f.prior_latest + 1s);
  EXPECT_LT(acked, f.prior_latest + 1s + 60ms);
  EXPECT_TRUE(f.h.cluster().violations().empty());
}

TEST(CommitGuard, WithoutDeferCommitWritesFailDuringTheWindow) {
  MechanismConfig m;
  m.defer_commit = false;
  m.inherited_reads = false;
  Failover f(m);
  std::optional<OpStatus> got;
  f.h.node(f.leader).client_write(ListAppend{"y", "w1"}, [&](const WriteResult& r) { got = r.status; });
  EXPECT_EQ(got, OpStatus::NoLease);
  EXPECT_EQ(f.h.read(f.leader, "x").status, OpStatus::NoLease);
  f.h.run_until([&] { return f.h.node(f.leader).own_term_committed(); }, 3s, "lease");
  EXPECT_GT(f.h.now(), f.prior_latest + 1s);
  EXPECT_EQ(f.h.read(f.leader, "x").status, OpStatus::Ok);
}

TEST(ReadLease, ServedAtTheAgeBoundaryRejectedJustAfter) {
  ClusterConfig c;
  c.clock.max_error = 0ns;
  c.mechanism.lease_maintenance = false;
  Harness h(c);
  NodeId l = *h.cluster().leader();
  Index wi = h.write(l, "x", "w");
  ASSERT_EQ(h.node(l).commit_index(), wi);
  SimTime boundary = h.node(l).log().at(wi).write_time.latest + c.mechanism.delta;
  std::optional<ReadResult> at_boundary, after;
  h.cluster().loop().schedule_at(boundary, [&] {
    h.node(l).client_read("x", [&](const ReadResult& r) { at_boundary = r; });
  });
  h.cluster().loop().schedule_at(boundary + 1ns, [&] {
    h.node(l).client_read("x", [&](const ReadResult& r) { after = r; });
  });
  h.run_for(boundary + 1ms - h.now());
  ASSERT_TRUE(at_boundary && after);
  EXPECT_EQ(at_boundary->status, OpStatus::Ok);
  EXPECT_EQ(at_boundary->values, (std::vector<std::string>{"w"}));
  EXPECT_EQ(after->status, OpStatus::NoLease);
}

TEST(LeaseMaintenance, IdleLeaderKeepsItsLeaseWithNoops) {
  Harness h;
  NodeId l = *h.cluster().leader();
  h.write(l, "x", "w");
  int refused = 0, served = 0;
  for (int i = 0; i < 500; ++i) {
    h.node(l).client_read("x", [&](const ReadResult& r) { (r.status == OpStatus::Ok ? served : refused)++; });
    h.run_for(10ms);
  }
  EXPECT_EQ(refused, 0);
  EXPECT_EQ(served, 500);
  int noops = 0;
  const auto& log = h.node(l).log();
  for (Index i = 1; i <= log.last_index(); ++i) noops += std::holds_alternative<Noop>(log.at(i).command);
  // One at election, then one per noop period over five seconds.
  EXPECT_GE(noops, 9);
  EXPECT_LE(noops, 12);
}

TEST(LeaseMaintenance, BusyLeaderAddsNoNoops) {
  Harness h;
  NodeId l = *h.cluster().leader();
  for (int i = 0; i < 300; ++i) {
    h.node(l).client_write(ListAppend{"x", "v" + std::to_string(i)}, [](const WriteResult&) {});
    h.run_for(10ms);
  }
  int noops = 0;
  const auto& log = h.node(l).log();
  for (Index i = 1; i <= log.last_index(); ++i) noops += std::holds_alternative<Noop>(log.at(i).command);
  EXPECT_EQ(noops, 1);
}

TEST(EndLease, SuccessorServesWithoutWaiting) {
  Harness h;
  NodeId l = *h.cluster().leader();
  h.write(l, "x", "w");
  h.node(l).relinquish();
  NodeId next = h.await_new_leader(l, "handover");
  SimTime elected = h.now();
  const auto& log = h.node(next).log();
  bool has_end = false;
  for (Index i = 1; i <= log.last_index(); ++i) {
    has_end |= std::holds_alternative<EndLease>(log.at(i).command) && log.at(i).term < h.node(next).term();
  }
  EXPECT_TRUE(has_end);
  EXPECT_FALSE(h.node(l).is_leader());
  // No inherited lease to wait out, only the election noop's round trip.
  h.run_until([&] { return h.node(next).own_term_committed(); }, 1s, "noop commit");
  EXPECT_LT(h.now() - elected, 5ms);
  auto r = h.read(next, "x");
  EXPECT_EQ(r.status, OpStatus::Ok);
  EXPECT_EQ(r.values, (std::vector<std::string>{"w"}));
  h.write(next, "x", "w2");
  EXPECT_LT(h.now() - elected, 20ms);
  EXPECT_TRUE(h.cluster().violations().empty());
}

TEST(EndLease, RelinquishingLeaderRefusesWrites) {
  Harness h;
  NodeId l = *h.cluster().leader();
  h.node(l).relinquish();
  std::optional<OpStatus> got;
  h.node(l).client_write(ListAppend{"x", "v"}, [&](const WriteResult& r) { got = r.status; });
  EXPECT_EQ(got, OpStatus::NotLeader);
}

TEST(Ongaro, MajorityOfRecentAcksHoldsTheLease) {
  MechanismConfig m;
  m.kind = MechanismKind::OngaroLease;
  Harness h(7, m);
  NodeId l = *h.cluster().leader();
  h.write(l, "x", "w");
  h.run_for(100ms);
  EXPECT_EQ(h.read(l, "x").status, OpStatus::Ok);
}

TEST(Ongaro, StaleAcksLoseTheLease) {
  MechanismConfig m;
  m.kind = MechanismKind::OngaroLease;
  Harness h(7, m);
  NodeId l = *h.cluster().leader();
  h.write(l, "x", "w");
  std::vector<NodeId> rest;
  for (NodeId i = 0; i < 3; ++i) {
    if (i != l) rest.push_back(i);
  }
  h.cluster().cut({l}, rest);
  h.run_for(m.election_timeout + 10ms);
  EXPECT_EQ(h.read(l, "x").status, OpStatus::NoLease);
}

TEST(Ongaro, NewLeaderReadsRightAfterElection) {
  MechanismConfig m;
  m.kind = MechanismKind::OngaroLease;
  Failover f(m);
  f.h.run_until([&] { return f.h.node(f.leader).own_term_committed(); }, 1s, "noop commit");
  auto r = f.h.read(f.leader, "x");
  EXPECT_EQ(r.status, OpStatus::Ok);
  EXPECT_LT(f.h.now() - f.elected, 20ms);
}

TEST(Monitor, FlagsCommitGuardWhenDriftExceedsItsBound) {
  ClusterConfig c;
  c.mechanism.clock_mode = ClockMode::DriftTimer;
  c.mechanism.epsilon = 10ms;
  c.mechanism.inherited_reads = false;
  c.mechanism.election_timeout = 200ms;
  c.drift_rates = {0.05, 0.05, 0.05};  // five times the allowed rate
  Harness h(c);
  NodeId l = *h.cluster().leader();
  h.write(l, "x", "w");
  h.cluster().crash_node(l);
  NodeId next = h.await_new_leader(l, "failover");
  h.run_until([&] { return h.node(next).own_term_committed(); }, 3s, "commit");
  bool flagged = false;
  for (const auto& v : h.cluster().violations()) flagged |= v.invariant == "commit_guard";
  EXPECT_TRUE(flagged);
}

TEST(Monitor, DriftWithinBoundIsClean) {
  ClusterConfig c;
  c.mechanism.clock_mode = ClockMode::DriftTimer;
  c.mechanism.epsilon = 10ms;
  c.mechanism.inherited_reads = false;
  c.mechanism.election_timeout = 200ms;
  c.drift_rates = {0.01, 0.01, 0.01};
  Harness h(c);
  NodeId l = *h.cluster().leader();
  h.write(l, "x", "w");
  h.cluster().crash_node(l);
  NodeId next = h.await_new_leader(l, "failover");
  h.run_until([&] { return h.node(next).own_term_committed(); }, 3s, "commit");
  EXPECT_TRUE(h.cluster().violations().empty());
}

TEST(MechanismConfig, InheritedReadsNeedIntervalClocks) {
  MechanismConfig m;
  m.clock_mode = ClockMode::DriftTimer;
  m.epsilon = 10ms;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.inherited_reads = false;
  EXPECT_NO_THROW(m.validate());
  m.epsilon = m.delta;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(ReadYourWrites, Case1CommittingLeaderServesW) {
  auto o = ryw_case_1();
  EXPECT_TRUE(o.shape_ok) << o.shape;
  EXPECT_EQ(o.status, OpStatus::Ok);
  EXPECT_TRUE(o.observed_w);
  EXPECT_TRUE(o.violations.empty());
}

TEST(ReadYourWrites, Case2DeposedLeaderRejects) {
  auto o = ryw_case_2();
  EXPECT_TRUE(o.shape_ok) << o.shape;
  EXPECT_EQ(o.status, OpStatus::NoLease);
  EXPECT_TRUE(o.violations.empty());
}

TEST(ReadYourWrites, Case31LaterLeaderWithoutLimboServesW) {
  auto o = ryw_case_3(true, false);
  EXPECT_TRUE(o.shape_ok) << o.shape;
  EXPECT_EQ(o.status, OpStatus::Ok);
  EXPECT_TRUE(o.observed_w);
  EXPECT_TRUE(o.violations.empty());
}

TEST(ReadYourWrites, Case32LimboRejectsAffectedKey) {
  auto o = ryw_case_3(false, false);
  EXPECT_TRUE(o.shape_ok) << o.shape;
  EXPECT_EQ(o.status, OpStatus::LimboConflict);
  EXPECT_TRUE(o.violations.empty());
  auto other = ryw_case_3_2_other_key();
  EXPECT_TRUE(other.shape_ok) << other.shape;
  EXPECT_EQ(other.status, OpStatus::Ok);
  EXPECT_TRUE(other.observed_w);
}

TEST(ReadYourWrites, Case33OwnTermCommitServesW) {
  auto o = ryw_case_3(false, true);
  EXPECT_TRUE(o.shape_ok) << o.shape;
  EXPECT_EQ(o.status, OpStatus::Ok);
  EXPECT_TRUE(o.observed_w);
  EXPECT_TRUE(o.violations.empty());
}

TEST(ReadYourWrites, CasesHoldAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    EXPECT_EQ(ryw_case_2(seed).status, OpStatus::NoLease) << seed;
    EXPECT_EQ(ryw_case_3(false, false, seed).status, OpStatus::LimboConflict) << seed;
    EXPECT_TRUE(ryw_case_3(true, false, seed).observed_w) << seed;
  }
}

TEST(Dump, NodeStateGolden) {
  Solo s;
  elect_with_limbo(s);
  EXPECT_EQ(s.node->dump_state(),
            "node 0 role=leader term=2 commit=3 applied=3\n"
            "1\t1\tappend(k1,v1)\t0\t0\n"
            "2\t1\tappend(k2,v2)\t0\t0\n"
            "3\t1\tappend(k3,v3)\t0\t0\n"
            "4\t1\tappend(k4,v4)\t0\t0\n"
            "5\t1\tappend(k5,v5)\t0\t0\n"
            "6\t1\tappend(k6,v6)\t0\t0\n"
            "7\t2\tnoop\t10000000\t10000000\n");
}
