#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgsim/cluster.hpp"
#include "lgsim/lin_checker.hpp"
#include "lgsim/workload.hpp"

namespace lgsim {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DriftPattern { None, Extreme, Random };

/// Everything that determines a run.
struct SimConfig {
  ClusterConfig cluster;
  DriftPattern drift = DriftPattern::None;
  FaultPlan faults;
  /// Replace `faults` with a plan drawn from the seed.
  bool random_faults = false;
  WorkloadSpec workload;
  Duration bucket = std::chrono::milliseconds(50);
  bool check_linearizability = true;
  /// A run whose verdict differs from this is reported as a failure.
  bool expect_linearizable = true;
  /// Longest wait for the initial leader's first commit.
  Duration bootstrap_limit = std::chrono::seconds(10);
};

Duration parse_duration(const std::string& s);
std::string format_duration(Duration d);
/// Accepts e.g. "391us^2" or "1ms^2"; returns ns^2.
double parse_variance(const std::string& s);
std::string format_variance(double ns2);

/// Sets one dotted key. Throws ConfigError for unknown keys or bad values.
void set_option(SimConfig& c, const std::string& key, const std::string& value);
/// key=value lines; '#' starts a comment.
SimConfig parse_config(const std::string& text, SimConfig base = {});
SimConfig load_config(const std::string& path);
/// Every key with its resolved value, in a fixed order.
std::string dump_config(const SimConfig& c);
void validate(const SimConfig& c);

struct LatencyStats {
  std::size_t count = 0;
  double p50_ms = 0;
  double p90_ms = 0;
  double p99_ms = 0;
};

struct MetricBucket {
  std::int64_t start_ms = 0;
  std::size_t reads_ok = 0;
  std::size_t reads_failed = 0;
  std::size_t writes_ok = 0;
  std::size_t writes_failed = 0;
  /// Successful writes whose acknowledgment landed in this bucket.
  std::size_t writes_acked = 0;
};

struct MetricSeries {
  Duration bucket{};
  std::vector<MetricBucket> buckets;
  LatencyStats read;
  LatencyStats write;
};

/// Nearest-rank percentile, p in (0, 1].
double percentile(std::vector<double> values, double p);
MetricSeries compute_metrics(const History& h, SimTime t0, Duration bucket, Duration span);
std::string timeline_csv(const MetricSeries& m);

/// Failover milestones, when the run contains a crash.
struct Failover {
  SimTime crash{};
  std::optional<SimTime> election;
  NodeId new_leader = -1;
  std::uint64_t limbo_entries = 0;
  std::optional<SimTime> lease_acquired;
  /// Newest creation instant among the old leader's entries that reached
  /// the new leader, plus delta.
  std::optional<SimTime> old_lease_expiry;
};

struct RunResult {
  SimConfig config;
  SimTime t0{};
  History history;
  MetricSeries metrics;
  std::optional<Verdict> verdict;
  std::vector<ClusterEvent> events;
  std::vector<Violation> violations;
  std::optional<Failover> failover;
  std::uint64_t events_executed = 0;
};

/// Deterministic in `config`. Throws ConfigError before simulating.
RunResult run_once(const SimConfig& config);

FaultPlan random_fault_plan(Rng& rng, int n_nodes, Duration horizon);

// Presets for the three experiments.

enum class Q2Variant { Inconsistent, Quorum, LogLease, DeferCommit, LeaseGuard, Ongaro };
std::string to_string(Q2Variant v);
Q2Variant parse_q2_variant(const std::string& s);
std::vector<Q2Variant> all_q2_variants();
void apply_variant(SimConfig& c, Q2Variant v);

SimConfig q1_config(MechanismKind kind, Duration one_way_mean, std::uint64_t seed);
SimConfig q2_config(Q2Variant v, std::uint64_t seed);
SimConfig q3_config(double zipf_a, std::uint64_t seed);

struct LatencyRow {
  MechanismKind mechanism;
  Duration one_way_mean{};
  LatencyStats read;
  LatencyStats write;
};
std::vector<LatencyRow> experiment_latency(std::uint64_t seed, const std::vector<Duration>& means,
                                           const std::vector<MechanismKind>& kinds);
std::string latency_csv(const std::vector<LatencyRow>& rows);

RunResult experiment_availability(Q2Variant v, std::uint64_t seed);

struct SkewRow {
  double zipf_a = 0;
  std::uint64_t limbo_entries = 0;
  std::size_t reads_in_window = 0;
  std::size_t reads_ok = 0;
  double success_rate() const {
    return reads_in_window == 0 ? 0.0 : static_cast<double>(reads_ok) / reads_in_window;
  }
};
SkewRow skew_row(const RunResult& r, double zipf_a);
std::vector<SkewRow> experiment_skewness(std::uint64_t seed, const std::vector<double>& exponents);
std::string skewness_csv(const std::vector<SkewRow>& rows);

}  // namespace lgsim
