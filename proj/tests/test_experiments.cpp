#include <gtest/gtest.h>

#include "lgsim/experiments.hpp"

using namespace lgsim;
using namespace std::chrono_literals;

TEST(Duration, ParseAndFormat) {
  EXPECT_EQ(parse_duration("0"), 0ns);
  EXPECT_EQ(parse_duration("1s"), 1s);
  EXPECT_EQ(parse_duration("500ms"), 500ms);
  EXPECT_EQ(parse_duration("191us"), 191us);
  EXPECT_EQ(parse_duration("1.5ms"), 1500us);
  EXPECT_EQ(parse_duration("7ns"), 7ns);
  EXPECT_EQ(format_duration(1500us), "1500us");
  EXPECT_EQ(format_duration(2s), "2s");
  EXPECT_EQ(format_duration(0ns), "0");
  for (auto s : {"", "5", "ms", "1.2.3s", "-1s", "3h"}) EXPECT_THROW(parse_duration(s), ConfigError) << s;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    Duration d{rng.uniform_int(0, 10'000'000'000)};
    EXPECT_EQ(parse_duration(format_duration(d)), d);
  }
}

TEST(Variance, ParseAndFormat) {
  EXPECT_DOUBLE_EQ(parse_variance("391us^2"), 391e6);
  EXPECT_DOUBLE_EQ(parse_variance("1ms^2"), 1e12);
  EXPECT_DOUBLE_EQ(parse_variance(format_variance(391e6)), 391e6);
  EXPECT_THROW(parse_variance("391us"), ConfigError);
  EXPECT_THROW(validate(parse_config("net.latency_variance=0us^2")), ConfigError);
}

TEST(Config, DumpParseDumpIsStable) {
  for (auto c : {SimConfig{}, q1_config(MechanismKind::Quorum, 5ms, 3), q2_config(Q2Variant::DeferCommit, 4),
                 q3_config(1.5, 5)}) {
    c.faults.partitions.push_back({{NodeRef::leader(), NodeRef::node(2)}, {NodeRef::others()}, 10ms, 20ms});
    c.faults.clock_faults.push_back({NodeRef::node(1), 5ms, 3s});
    c.faults.restarts.push_back({NodeRef::last_crashed(), 900ms});
    std::string text = dump_config(c);
    EXPECT_EQ(dump_config(parse_config(text)), text);
  }
}

TEST(Config, DumpMaterializesDefaults) {
  std::string text = dump_config(SimConfig{});
  for (auto key : {"seed = 1\n", "cluster.nodes = 3\n", "mechanism.delta = 1s\n",
                   "raft.election_timeout = 500ms\n", "mechanism.noop_period = 500ms\n", "workload.timeout = 1s\n",
                   "net.latency_mean = 191us\n", "net.latency_variance = 391us^2\n"}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
}

TEST(Config, ParsesCommentsAndFaultSyntax) {
  auto c = parse_config(
      "# comment\n"
      "seed = 9\n"
      "mechanism.kind=quorum  # trailing\n"
      "fault.crash=leader@500ms\n"
      "fault.restart=last_crashed@1s\n"
      "fault.partition=0+1|others@100ms-inf,2|0@1s-2s\n"
      "fault.clock=leader@500ms+3s\n");
  EXPECT_EQ(c.cluster.seed, 9u);
  EXPECT_EQ(c.cluster.mechanism.kind, MechanismKind::Quorum);
  ASSERT_EQ(c.faults.crashes.size(), 1u);
  EXPECT_EQ(c.faults.crashes[0].node, NodeRef::leader());
  EXPECT_EQ(c.faults.crashes[0].at, 500ms);
  EXPECT_EQ(c.faults.restarts[0].node, NodeRef::last_crashed());
  ASSERT_EQ(c.faults.partitions.size(), 2u);
  EXPECT_EQ(c.faults.partitions[0].side_a, (std::vector<NodeRef>{NodeRef::node(0), NodeRef::node(1)}));
  EXPECT_EQ(c.faults.partitions[0].side_b, (std::vector<NodeRef>{NodeRef::others()}));
  EXPECT_EQ(c.faults.partitions[0].until, Duration::max());
  EXPECT_EQ(c.faults.partitions[1].until, 2s);
  EXPECT_EQ(c.faults.clock_faults[0].lag, 3s);
}

TEST(Config, RejectsBadInput) {
  auto rejects = [](const std::string& text) { EXPECT_THROW(validate(parse_config(text)), ConfigError) << text; };
  rejects("no.such.key=1");
  rejects("seed=abc");
  rejects("mechanism.kind=paxos");
  rejects("cluster.nodes=0");
  rejects("missing equals sign");
  rejects("fault.partition=0|1@5ms");
  rejects("workload.write_fraction=2");
  rejects("clock.drift=extreme");
  rejects("mechanism.clock_mode=drift_timer\nmechanism.epsilon=10ms\nmechanism.inherited_reads=true");
  EXPECT_NO_THROW(validate(parse_config(
      "mechanism.clock_mode=drift_timer\nmechanism.epsilon=10ms\nmechanism.inherited_reads=false\nclock.drift=extreme")));
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("seed=1\n\nbogus=2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, RunOnceRejectsBeforeSimulating) {
  auto c = q2_config(Q2Variant::LeaseGuard, 1);
  c.cluster.mechanism.clock_mode = ClockMode::DriftTimer;
  c.cluster.mechanism.epsilon = 10ms;
  EXPECT_THROW(run_once(c), std::invalid_argument);
}

TEST(Percentile, NearestRank) {
  std::vector<double> v{15, 20, 35, 40, 50};
  EXPECT_EQ(percentile(v, 0.05), 15);
  EXPECT_EQ(percentile(v, 0.3), 20);
  EXPECT_EQ(percentile(v, 0.4), 20);
  EXPECT_EQ(percentile(v, 0.5), 35);
  EXPECT_EQ(percentile(v, 1.0), 50);
  std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(percentile(ten, 0.9), 9);
  EXPECT_EQ(percentile(ten, 0.99), 10);
  EXPECT_EQ(percentile({}, 0.5), 0);
}

namespace {

ClientLogEntry op(OpType t, std::int64_t start_ms, std::int64_t end_ms, bool ok) {
  ClientLogEntry e;
  e.op = t;
  e.start = at(std::chrono::milliseconds(start_ms));
  e.end = at(std::chrono::milliseconds(end_ms));
  e.key = "k";
  if (t == OpType::ListAppend) e.values = {"v" + std::to_string(start_ms)};
  e.success = ok;
  return e;
}

}  // namespace

TEST(Metrics, TimelineGolden) {
  History h{op(OpType::Read, 100, 101, true), op(OpType::ListAppend, 120, 170, true),
            op(OpType::Read, 160, 165, false), op(OpType::ListAppend, 180, 190, false)};
  auto m = compute_metrics(h, at(100ms), 50ms, 100ms);
  EXPECT_EQ(timeline_csv(m),
            "bucket_start_ms,reads_ok,reads_failed,writes_ok,writes_failed,writes_acked\n"
            "0,1,0,1,0,0\n"
            "50,0,1,0,1,1\n"
            "100,0,0,0,0,0\n");
  EXPECT_EQ(m.read.count, 1u);
  EXPECT_DOUBLE_EQ(m.read.p90_ms, 1.0);
  EXPECT_EQ(m.write.count, 1u);
  EXPECT_DOUBLE_EQ(m.write.p50_ms, 50.0);
}

TEST(Metrics, BucketsConserveHistoryTotals) {
  auto r = run_once(q2_config(Q2Variant::DeferCommit, 3));
  std::size_t ok = 0, failed = 0, acked = 0;
  for (const auto& b : r.metrics.buckets) {
    ok += b.reads_ok + b.writes_ok;
    failed += b.reads_failed + b.writes_failed;
    acked += b.writes_acked;
  }
  std::size_t want_ok = 0, want_writes = 0;
  for (const auto& e : r.history) {
    want_ok += e.success;
    want_writes += e.success && e.op == OpType::ListAppend;
  }
  EXPECT_EQ(ok + failed, r.history.size());
  EXPECT_EQ(ok, want_ok);
  EXPECT_EQ(acked, want_writes);
}

TEST(Csv, LatencyGolden) {
  LatencyRow row{MechanismKind::LeaseGuard, 5ms, {10, 0, 0.25, 0.5}, {10, 9, 12.5, 20}};
  EXPECT_EQ(latency_csv({row}),
            "mechanism,latency_ms,read_p90_ms,write_p90_ms\n"
            "leaseguard,5,0.25,12.5\n");
}

TEST(Csv, SkewnessGolden) {
  SkewRow row{1.5, 100, 400, 100};
  EXPECT_EQ(skewness_csv({row}),
            "zipf_a,limbo_entries,reads_in_window,reads_ok,success_rate\n"
            "1.5,100,400,100,0.25\n");
}

TEST(RunOnce, SameConfigSameArtifacts) {
  auto c = q2_config(Q2Variant::LeaseGuard, 11);
  c.workload.duration = 1500ms;
  auto a = run_once(c), b = run_once(c);
  EXPECT_EQ(dump_history(a.history), dump_history(b.history));
  EXPECT_EQ(timeline_csv(a.metrics), timeline_csv(b.metrics));
  EXPECT_EQ(a.events_executed, b.events_executed);
  c.cluster.seed = 12;
  EXPECT_NE(dump_history(run_once(c).history), dump_history(a.history));
}

TEST(RunOnce, LeaseGuardAvailabilityRunIsLinearizable) {
  auto r = experiment_availability(Q2Variant::LeaseGuard, 1);
  ASSERT_TRUE(r.verdict);
  EXPECT_TRUE(r.verdict->linearizable) << describe(*r.verdict, r.history);
  EXPECT_TRUE(r.violations.empty());
  ASSERT_TRUE(r.failover);
  ASSERT_TRUE(r.failover->election && r.failover->lease_acquired && r.failover->old_lease_expiry);
  EXPECT_GT(*r.failover->election, r.failover->crash);
  EXPECT_GE(*r.failover->lease_acquired, *r.failover->old_lease_expiry);
  EXPECT_LT(*r.failover->lease_acquired, *r.failover->old_lease_expiry + 50ms);
}

TEST(Skewness, UniformKeysMostlyReadable) {
  auto r = run_once(q3_config(0, 1));
  auto row = skew_row(r, 0);
  EXPECT_EQ(row.limbo_entries, 100u);
  EXPECT_GT(row.reads_in_window, 500u);
  EXPECT_GE(row.success_rate(), 0.85);
  // After the lease arrives every read succeeds.
  std::size_t after = 0, after_ok = 0;
  for (const auto& e : r.history) {
    if (e.op != OpType::Read || e.start < *r.failover->lease_acquired + 10ms) continue;
    ++after;
    after_ok += e.success;
  }
  ASSERT_GT(after, 100u);
  EXPECT_EQ(after_ok, after);
}

TEST(Skewness, HotKeyBlocksMostReads) {
  auto row = skew_row(run_once(q3_config(2, 1)), 2);
  EXPECT_LT(row.success_rate(), 0.5);
}

TEST(Q2Variants, NamesRoundTrip) {
  for (auto v : all_q2_variants()) EXPECT_EQ(parse_q2_variant(to_string(v)), v);
  EXPECT_THROW(parse_q2_variant("nope"), ConfigError);
  SimConfig c;
  apply_variant(c, Q2Variant::LogLease);
  EXPECT_EQ(c.cluster.mechanism.kind, MechanismKind::LeaseGuard);
  EXPECT_FALSE(c.cluster.mechanism.defer_commit);
  EXPECT_FALSE(c.cluster.mechanism.inherited_reads);
  apply_variant(c, Q2Variant::DeferCommit);
  EXPECT_TRUE(c.cluster.mechanism.defer_commit);
  EXPECT_FALSE(c.cluster.mechanism.inherited_reads);
}

TEST(RandomFaults, PlansAreValidAndSeeded) {
  auto dump = [](const FaultPlan& p) {
    SimConfig c;
    c.faults = p;
    return dump_config(c);
  };
  for (std::uint64_t s = 1; s <= 200; ++s) {
    Rng a(s), b(s);
    auto p = random_fault_plan(a, 3, 4s);
    EXPECT_NO_THROW(validate(p, 3));
    EXPECT_FALSE(p.crashes.empty() && p.partitions.empty());
    EXPECT_EQ(dump(p), dump(random_fault_plan(b, 3, 4s)));
  }
}
