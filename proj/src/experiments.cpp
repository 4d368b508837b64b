#include "lgsim/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lgsim {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("bad number for " + what + ": '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad integer for " + what + ": '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad unsigned integer for " + what + ": '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("bad boolean for " + what + ": '" + s + "'");
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Unit {
  const char* name;
  std::int64_t ns;
};
constexpr Unit kUnits[] = {{"s", 1'000'000'000}, {"ms", 1'000'000}, {"us", 1'000}, {"ns", 1}};

std::pair<double, std::int64_t> split_unit(const std::string& s, const std::string& suffix) {
  for (const auto& u : kUnits) {
    std::string tail = std::string(u.name) + suffix;
    if (s.size() > tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0) {
      std::string num = s.substr(0, s.size() - tail.size());
      // "ms" also ends in "s"; make sure the number part is numeric.
      if (!num.empty() && (std::isdigit(static_cast<unsigned char>(num.back())) || num.back() == '.')) {
        return {parse_number(num, s), u.ns};
      }
    }
  }
  throw ConfigError("missing or unknown unit in '" + s + "'");
}

NodeRef to_ref(const std::string& s) {
  try {
    return parse_node_ref(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::pair<std::string, std::string> split_at(const std::string& item, char sep, const std::string& what) {
  auto pos = item.find(sep);
  if (pos == std::string::npos) throw ConfigError("bad " + what + " item '" + item + "'");
  return {item.substr(0, pos), item.substr(pos + 1)};
}

std::vector<NodeRef> parse_side(const std::string& s) {
  std::vector<NodeRef> out;
  for (const auto& r : split(s, '+')) out.push_back(to_ref(r));
  if (out.empty()) throw ConfigError("empty partition side");
  return out;
}

std::string format_side(const std::vector<NodeRef>& side) {
  std::string out;
  for (std::size_t i = 0; i < side.size(); ++i) {
    if (i) out += '+';
    out += to_string(side[i]);
  }
  return out;
}

std::string format_until(Duration d) { return d == Duration::max() ? "inf" : format_duration(d); }

std::string drift_name(DriftPattern d) {
  switch (d) {
    case DriftPattern::None:
      return "none";
    case DriftPattern::Extreme:
      return "extreme";
    case DriftPattern::Random:
      return "random";
  }
  return "?";
}

Duration effective_timeout(const SimConfig& c) {
  return c.workload.timeout > Duration::zero() ? c.workload.timeout
                                               : 2 * c.cluster.mechanism.election_timeout;
}

}  // namespace

Duration parse_duration(const std::string& raw) {
  std::string s = trim(raw);
  if (s == "0") return Duration::zero();
  auto [v, unit] = split_unit(s, "");
  double ns = v * static_cast<double>(unit);
  if (ns < 0 || ns > 9.2e18) throw ConfigError("duration out of range: '" + s + "'");
  return Duration{std::llround(ns)};
}

std::string format_duration(Duration d) {
  auto n = d.count();
  if (n == 0) return "0";
  for (const auto& u : kUnits) {
    if (n % u.ns == 0) return std::to_string(n / u.ns) + u.name;
  }
  return std::to_string(n) + "ns";
}

double parse_variance(const std::string& raw) {
  std::string s = trim(raw);
  auto [v, unit] = split_unit(s, "^2");
  double u = static_cast<double>(unit);
  return v * u * u;
}

std::string format_variance(double ns2) {
  for (const auto& u : kUnits) {
    double scale = static_cast<double>(u.ns) * static_cast<double>(u.ns);
    double q = ns2 / scale;
    if (q >= 1.0 && q == std::round(q) && q < 1e15) return format_number(q) + u.name + "^2";
  }
  return format_number(ns2) + "ns^2";
}

void set_option(SimConfig& c, const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  auto& m = c.cluster.mechanism;
  auto& w = c.workload;
  auto& f = c.faults;
  try {
    if (key == "seed") {
      c.cluster.seed = parse_uint(v, key);
    } else if (key == "cluster.nodes") {
      c.cluster.n_nodes = static_cast<int>(parse_int(v, key));
    } else if (key == "raft.election_timeout") {
      m.election_timeout = parse_duration(v);
    } else if (key == "raft.heartbeat") {
      m.heartbeat = parse_duration(v);
    } else if (key == "raft.max_batch") {
      m.max_batch = parse_uint(v, key);
    } else if (key == "mechanism.kind") {
      m.kind = parse_mechanism_kind(v);
    } else if (key == "mechanism.defer_commit") {
      m.defer_commit = parse_bool(v, key);
    } else if (key == "mechanism.inherited_reads") {
      m.inherited_reads = parse_bool(v, key);
    } else if (key == "mechanism.delta") {
      m.delta = parse_duration(v);
    } else if (key == "mechanism.clock_mode") {
      m.clock_mode = parse_clock_mode(v);
    } else if (key == "mechanism.epsilon") {
      m.epsilon = parse_duration(v);
    } else if (key == "mechanism.noop_period") {
      m.noop_period = parse_duration(v);
    } else if (key == "mechanism.lease_maintenance") {
      m.lease_maintenance = parse_bool(v, key);
    } else if (key == "net.latency_mean") {
      c.cluster.net.latency.mean = parse_duration(v);
    } else if (key == "net.latency_variance") {
      c.cluster.net.latency.variance_ns2 = parse_variance(v);
    } else if (key == "net.io_time") {
      c.cluster.net.io_time = parse_duration(v);
    } else if (key == "net.client_latency") {
      c.cluster.client_latency = parse_duration(v);
    } else if (key == "clock.max_error") {
      c.cluster.clock.max_error = parse_duration(v);
    } else if (key == "clock.center_jitter") {
      c.cluster.clock.center_jitter = parse_number(v, key);
    } else if (key == "clock.monotonic") {
      c.cluster.clock.monotonic = parse_bool(v, key);
    } else if (key == "clock.drift") {
      if (v == "none") {
        c.drift = DriftPattern::None;
      } else if (v == "extreme") {
        c.drift = DriftPattern::Extreme;
      } else if (v == "random") {
        c.drift = DriftPattern::Random;
      } else {
        throw ConfigError("clock.drift must be none, extreme or random");
      }
    } else if (key == "fault.crash" || key == "fault.restart") {
      std::vector<CrashFault> items;
      for (const auto& item : split(v, ',')) {
        auto [who, when] = split_at(item, '@', key);
        items.push_back({to_ref(who), parse_duration(when)});
      }
      if (key == "fault.crash") {
        f.crashes = items;
      } else {
        f.restarts.clear();
        for (const auto& i : items) f.restarts.push_back({i.node, i.at});
      }
    } else if (key == "fault.partition") {
      f.partitions.clear();
      for (const auto& item : split(v, ',')) {
        auto [sides, window] = split_at(item, '@', key);
        auto [a, b] = split_at(sides, '|', key);
        auto [from, until] = split_at(window, '-', key);
        f.partitions.push_back({parse_side(a), parse_side(b), parse_duration(from),
                                until == "inf" ? Duration::max() : parse_duration(until)});
      }
    } else if (key == "fault.clock") {
      f.clock_faults.clear();
      for (const auto& item : split(v, ',')) {
        auto [who, rest] = split_at(item, '@', key);
        auto [when, lag] = split_at(rest, '+', key);
        f.clock_faults.push_back({to_ref(who), parse_duration(when), parse_duration(lag)});
      }
    } else if (key == "fault.limbo_burst") {
      f.limbo_burst = static_cast<int>(parse_int(v, key));
    } else if (key == "fault.random") {
      c.random_faults = parse_bool(v, key);
    } else if (key == "workload.arrival") {
      w.arrival = parse_arrival(v);
    } else if (key == "workload.gap") {
      w.gap = parse_duration(v);
    } else if (key == "workload.clients") {
      w.clients = static_cast<int>(parse_int(v, key));
    } else if (key == "workload.write_fraction") {
      w.write_fraction = parse_number(v, key);
    } else if (key == "workload.keys") {
      w.keys = parse_uint(v, key);
    } else if (key == "workload.zipf_a") {
      w.zipf_a = parse_number(v, key);
    } else if (key == "workload.value_size") {
      w.value_size = parse_uint(v, key);
    } else if (key == "workload.duration") {
      w.duration = parse_duration(v);
    } else if (key == "workload.max_ops") {
      w.max_ops = parse_uint(v, key);
    } else if (key == "workload.read_policy") {
      w.read_policy = parse_target_policy(v);
    } else if (key == "workload.write_policy") {
      w.write_policy = parse_target_policy(v);
    } else if (key == "workload.timeout") {
      w.timeout = parse_duration(v);
    } else if (key == "metrics.bucket") {
      c.bucket = parse_duration(v);
    } else if (key == "check.linearizability") {
      c.check_linearizability = parse_bool(v, key);
    } else if (key == "check.invariants") {
      c.cluster.check_invariants = parse_bool(v, key);
    } else if (key == "check.expect") {
      if (v != "linearizable" && v != "violation") {
        throw ConfigError("check.expect must be linearizable or violation");
      }
      c.expect_linearizable = v == "linearizable";
    } else if (key == "run.bootstrap_limit") {
      c.bootstrap_limit = parse_duration(v);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

SimConfig parse_config(const std::string& text, SimConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    try {
      set_option(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const SimConfig& c) {
  const auto& m = c.cluster.mechanism;
  const auto& w = c.workload;
  const auto& f = c.faults;
  std::ostringstream out;
  auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  kv("seed", std::to_string(c.cluster.seed));
  kv("cluster.nodes", std::to_string(c.cluster.n_nodes));
  kv("raft.election_timeout", format_duration(m.election_timeout));
  kv("raft.heartbeat", format_duration(m.heartbeat));
  kv("raft.max_batch", std::to_string(m.max_batch));
  kv("mechanism.kind", to_string(m.kind));
  kv("mechanism.defer_commit", b(m.defer_commit));
  kv("mechanism.inherited_reads", b(m.inherited_reads));
  kv("mechanism.delta", format_duration(m.delta));
  kv("mechanism.clock_mode", to_string(m.clock_mode));
  kv("mechanism.epsilon", format_duration(m.epsilon));
  kv("mechanism.noop_period", format_duration(m.effective_noop_period()));
  kv("mechanism.lease_maintenance", b(m.lease_maintenance));
  kv("net.latency_mean", format_duration(c.cluster.net.latency.mean));
  kv("net.latency_variance", format_variance(c.cluster.net.latency.variance_ns2));
  kv("net.io_time", format_duration(c.cluster.net.io_time));
  kv("net.client_latency", format_duration(c.cluster.client_latency));
  kv("clock.max_error", format_duration(c.cluster.clock.max_error));
  kv("clock.center_jitter", format_number(c.cluster.clock.center_jitter));
  kv("clock.monotonic", b(c.cluster.clock.monotonic));
  kv("clock.drift", drift_name(c.drift));

  std::string items;
  for (const auto& x : f.crashes) items += (items.empty() ? "" : ",") + to_string(x.node) + "@" + format_duration(x.at);
  kv("fault.crash", items);
  items.clear();
  for (const auto& x : f.restarts) items += (items.empty() ? "" : ",") + to_string(x.node) + "@" + format_duration(x.at);
  kv("fault.restart", items);
  items.clear();
  for (const auto& p : f.partitions) {
    items += (items.empty() ? "" : ",") + format_side(p.side_a) + "|" + format_side(p.side_b) + "@" +
             format_duration(p.from) + "-" + format_until(p.until);
  }
  kv("fault.partition", items);
  items.clear();
  for (const auto& x : f.clock_faults) {
    items += (items.empty() ? "" : ",") + to_string(x.node) + "@" + format_duration(x.at) + "+" +
             format_duration(x.lag);
  }
  kv("fault.clock", items);
  kv("fault.limbo_burst", std::to_string(f.limbo_burst));
  kv("fault.random", b(c.random_faults));

  kv("workload.arrival", to_string(w.arrival));
  kv("workload.gap", format_duration(w.gap));
  kv("workload.clients", std::to_string(w.clients));
  kv("workload.write_fraction", format_number(w.write_fraction));
  kv("workload.keys", std::to_string(w.keys));
  kv("workload.zipf_a", format_number(w.zipf_a));
  kv("workload.value_size", std::to_string(w.value_size));
  kv("workload.duration", format_duration(w.duration));
  kv("workload.max_ops", std::to_string(w.max_ops));
  kv("workload.read_policy", to_string(w.read_policy));
  kv("workload.write_policy", to_string(w.write_policy));
  kv("workload.timeout", format_duration(effective_timeout(c)));
  kv("metrics.bucket", format_duration(c.bucket));
  kv("check.linearizability", b(c.check_linearizability));
  kv("check.invariants", b(c.cluster.check_invariants));
  kv("check.expect", c.expect_linearizable ? "linearizable" : "violation");
  kv("run.bootstrap_limit", format_duration(c.bootstrap_limit));
  return out.str();
}

void validate(const SimConfig& c) {
  try {
    if (c.cluster.n_nodes < 1 || c.cluster.n_nodes > 31) {
      throw ConfigError("cluster.nodes must lie in [1, 31]");
    }
    c.cluster.mechanism.validate();
    if (c.cluster.net.latency.mean <= Duration::zero() || !(c.cluster.net.latency.variance_ns2 > 0)) {
      throw ConfigError("net latency mean and variance must be positive");
    }
    if (c.cluster.net.io_time < Duration::zero() || c.cluster.client_latency < Duration::zero()) {
      throw ConfigError("net.io_time and net.client_latency must be non-negative");
    }
    if (c.cluster.clock.max_error < Duration::zero() || c.cluster.clock.center_jitter < 0 ||
        c.cluster.clock.center_jitter >= 1) {
      throw ConfigError("clock.max_error must be non-negative and clock.center_jitter in [0, 1)");
    }
    if (c.drift != DriftPattern::None && c.cluster.mechanism.clock_mode != ClockMode::DriftTimer) {
      throw ConfigError("clock.drift requires mechanism.clock_mode=drift_timer");
    }
    validate(c.faults, c.cluster.n_nodes);
    c.workload.validate();
    if (c.bucket <= Duration::zero()) throw ConfigError("metrics.bucket must be positive");
    if (c.bootstrap_limit <= Duration::zero()) throw ConfigError("run.bootstrap_limit must be positive");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

LatencyStats stats(const std::vector<double>& v) {
  return {v.size(), percentile(v, 0.5), percentile(v, 0.9), percentile(v, 0.99)};
}

}  // namespace

MetricSeries compute_metrics(const History& h, SimTime t0, Duration bucket, Duration span) {
  MetricSeries m;
  m.bucket = bucket;
  SimTime last = t0 + span;
  for (const auto& e : h) last = std::max({last, e.start, e.end});
  auto n = static_cast<std::size_t>((last - t0) / bucket) + 1;
  m.buckets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.buckets[i].start_ms = static_cast<std::int64_t>(i) * bucket.count() / 1'000'000;
  }
  auto slot = [&](SimTime t) -> std::optional<std::size_t> {
    if (t < t0) return std::nullopt;
    return static_cast<std::size_t>((t - t0) / bucket);
  };
  std::vector<double> reads, writes;
  for (const auto& e : h) {
    auto s = slot(e.start);
    bool read = e.op == OpType::Read;
    if (s) {
      auto& b = m.buckets[*s];
      if (read) {
        (e.success ? b.reads_ok : b.reads_failed)++;
      } else {
        (e.success ? b.writes_ok : b.writes_failed)++;
      }
    }
    if (e.success) {
      (read ? reads : writes).push_back(to_ms(e.end - e.start));
      if (!read) {
        if (auto a = slot(e.end)) m.buckets[*a].writes_acked++;
      }
    }
  }
  m.read = stats(reads);
  m.write = stats(writes);
  return m;
}

std::string timeline_csv(const MetricSeries& m) {
  std::ostringstream out;
  out << "bucket_start_ms,reads_ok,reads_failed,writes_ok,writes_failed,writes_acked\n";
  for (const auto& b : m.buckets) {
    out << b.start_ms << ',' << b.reads_ok << ',' << b.reads_failed << ',' << b.writes_ok << ','
        << b.writes_failed << ',' << b.writes_acked << '\n';
  }
  return out.str();
}

FaultPlan random_fault_plan(Rng& rng, int n_nodes, Duration horizon) {
  FaultPlan plan;
  auto ms = [](std::int64_t x) { return Duration{std::chrono::milliseconds(x)}; };
  std::int64_t h_ms = std::max<std::int64_t>(horizon.count() / 1'000'000, 10);
  auto pick_node = [&]() {
    return rng.bernoulli(0.5) ? NodeRef::leader()
                              : NodeRef::node(static_cast<NodeId>(rng.uniform_int(0, n_nodes - 1)));
  };
  int k = static_cast<int>(rng.uniform_int(1, 4));
  for (int i = 0; i < k; ++i) {
    Duration t = ms(rng.uniform_int(0, h_ms * 7 / 10));
    switch (rng.uniform_int(0, 2)) {
      case 0: {
        NodeRef who = pick_node();
        plan.crashes.push_back({who, t});
        Duration back = t + ms(rng.uniform_int(100, 1500));
        plan.restarts.push_back({who.kind == NodeRef::Kind::Leader ? NodeRef::last_crashed() : who, back});
        break;
      }
      case 1:
        plan.partitions.push_back({{pick_node()}, {NodeRef::others()}, t, t + ms(rng.uniform_int(100, 2000))});
        break;
      default: {
        auto a = static_cast<NodeId>(rng.uniform_int(0, n_nodes - 1));
        auto b = static_cast<NodeId>((a + rng.uniform_int(1, std::max(1, n_nodes - 1))) % n_nodes);
        if (a == b) break;
        plan.partitions.push_back({{NodeRef::node(a)}, {NodeRef::node(b)}, t, t + ms(rng.uniform_int(100, 2000))});
        break;
      }
    }
  }
  return plan;
}

namespace {

std::vector<double> drift_rates(const SimConfig& c) {
  const auto& m = c.cluster.mechanism;
  double max_rate = max_drift_rate(m.epsilon, m.delta);
  std::vector<double> rates(c.cluster.n_nodes, 0.0);
  Rng rng = Rng(c.cluster.seed).derive("drift");
  for (int i = 0; i < c.cluster.n_nodes; ++i) {
    switch (c.drift) {
      case DriftPattern::None:
        break;
      case DriftPattern::Extreme:
        rates[i] = i % 2 == 0 ? max_rate : -max_rate;
        break;
      case DriftPattern::Random:
        rates[i] = rng.uniform(-max_rate, max_rate);
        break;
    }
  }
  return rates;
}

std::optional<Failover> find_failover(const Cluster& cluster, const std::vector<ClusterEvent>& events) {
  auto crash = std::find_if(events.begin(), events.end(),
                            [](const auto& e) { return e.kind == ClusterEvent::Kind::Crashed; });
  if (crash == events.end()) return std::nullopt;
  Failover f;
  f.crash = crash->at;
  auto elected = std::find_if(crash, events.end(),
                              [](const auto& e) { return e.kind == ClusterEvent::Kind::Elected; });
  if (elected == events.end()) return f;
  f.election = elected->at;
  f.new_leader = elected->node;
  f.limbo_entries = elected->detail;
  auto lease = std::find_if(elected, events.end(), [&](const auto& e) {
    return e.kind == ClusterEvent::Kind::LeaseAcquired && e.node == elected->node && e.term == elected->term;
  });
  if (lease != events.end()) f.lease_acquired = lease->at;
  const auto& log = cluster.node(elected->node).log();
  std::optional<SimTime> newest;
  for (Index i = 1; i <= log.last_index(); ++i) {
    const auto& e = log.at(i);
    if (e.term < elected->term && (!newest || e.origin_time > *newest)) newest = e.origin_time;
  }
  if (newest) f.old_lease_expiry = *newest + cluster.config().mechanism.delta;
  return f;
}

}  // namespace

RunResult run_once(const SimConfig& config) {
  validate(config);
  RunResult r;
  r.config = config;
  SimConfig& c = r.config;
  if (c.random_faults) {
    Rng frng = Rng(c.cluster.seed).derive("faults");
    c.faults = random_fault_plan(frng, c.cluster.n_nodes, c.workload.duration);
  }
  ClusterConfig cc = c.cluster;
  cc.drift_rates = drift_rates(c);
  Cluster cluster(cc);
  Workload workload(cluster, c.workload, Rng(c.cluster.seed).derive("workload"));

  cluster.start();
  bool up = cluster.loop().run_until_condition(
      [&] {
        auto l = cluster.leader();
        return l && cluster.node(*l).own_term_committed();
      },
      at(c.bootstrap_limit));
  if (!up) throw std::runtime_error("no leader committed within run.bootstrap_limit");
  r.t0 = cluster.loop().now();
  apply_fault_plan(cluster.loop(), c.faults, cluster);
  workload.start(r.t0);
  cluster.loop().run_until(r.t0 + c.workload.duration + workload.timeout() + std::chrono::milliseconds(1));
  workload.finalize();

  r.history = workload.history();
  r.metrics = compute_metrics(r.history, r.t0, c.bucket, c.workload.duration);
  if (c.check_linearizability) r.verdict = check(r.history);
  r.events = cluster.events();
  r.violations = cluster.violations();
  r.failover = find_failover(cluster, r.events);
  r.events_executed = cluster.loop().executed();
  return r;
}

std::string to_string(Q2Variant v) {
  switch (v) {
    case Q2Variant::Inconsistent:
      return "inconsistent";
    case Q2Variant::Quorum:
      return "quorum";
    case Q2Variant::LogLease:
      return "log_lease";
    case Q2Variant::DeferCommit:
      return "defer_commit";
    case Q2Variant::LeaseGuard:
      return "leaseguard";
    case Q2Variant::Ongaro:
      return "ongaro";
  }
  return "?";
}

Q2Variant parse_q2_variant(const std::string& s) {
  for (auto v : all_q2_variants()) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown availability variant '" + s + "'");
}

std::vector<Q2Variant> all_q2_variants() {
  return {Q2Variant::Inconsistent, Q2Variant::Quorum,     Q2Variant::LogLease,
          Q2Variant::DeferCommit,  Q2Variant::LeaseGuard, Q2Variant::Ongaro};
}

void apply_variant(SimConfig& c, Q2Variant v) {
  auto& m = c.cluster.mechanism;
  m.defer_commit = false;
  m.inherited_reads = false;
  switch (v) {
    case Q2Variant::Inconsistent:
      m.kind = MechanismKind::Inconsistent;
      break;
    case Q2Variant::Quorum:
      m.kind = MechanismKind::Quorum;
      break;
    case Q2Variant::LogLease:
      m.kind = MechanismKind::LeaseGuard;
      break;
    case Q2Variant::DeferCommit:
      m.kind = MechanismKind::LeaseGuard;
      m.defer_commit = true;
      break;
    case Q2Variant::LeaseGuard:
      m.kind = MechanismKind::LeaseGuard;
      m.defer_commit = true;
      m.inherited_reads = true;
      break;
    case Q2Variant::Ongaro:
      m.kind = MechanismKind::OngaroLease;
      break;
  }
}

SimConfig q1_config(MechanismKind kind, Duration one_way_mean, std::uint64_t seed) {
  SimConfig c;
  c.cluster.seed = seed;
  auto& m = c.cluster.mechanism;
  m.kind = kind;
  m.defer_commit = m.inherited_reads = kind == MechanismKind::LeaseGuard;
  c.cluster.net.latency.mean = one_way_mean;
  // Variance numerically equal to the mean, in ms^2.
  double mean_ms = to_ms(one_way_mean);
  c.cluster.net.latency.variance_ns2 = mean_ms * 1e12;
  c.workload.arrival = ArrivalKind::Poisson;
  c.workload.clients = 50;
  c.workload.gap = std::chrono::milliseconds(100);
  c.workload.write_fraction = 0.5;
  c.workload.duration = std::chrono::seconds(4);
  return c;
}

SimConfig q2_config(Q2Variant v, std::uint64_t seed) {
  SimConfig c;
  c.cluster.seed = seed;
  apply_variant(c, v);
  c.workload.arrival = ArrivalKind::Fixed;
  c.workload.gap = std::chrono::microseconds(300);
  c.workload.clients = 1;
  c.workload.write_fraction = 1.0 / 3.0;
  c.workload.duration = std::chrono::seconds(3);
  c.faults.crashes.push_back({NodeRef::leader(), std::chrono::milliseconds(500)});
  return c;
}

SimConfig q3_config(double zipf_a, std::uint64_t seed) {
  SimConfig c = q2_config(Q2Variant::LeaseGuard, seed);
  c.workload.zipf_a = zipf_a;
  c.faults.limbo_burst = 100;
  return c;
}

std::vector<LatencyRow> experiment_latency(std::uint64_t seed, const std::vector<Duration>& means,
                                           const std::vector<MechanismKind>& kinds) {
  std::vector<LatencyRow> rows;
  for (auto mean : means) {
    for (auto kind : kinds) {
      auto r = run_once(q1_config(kind, mean, seed));
      rows.push_back({kind, mean, r.metrics.read, r.metrics.write});
    }
  }
  return rows;
}

std::string latency_csv(const std::vector<LatencyRow>& rows) {
  std::ostringstream out;
  out << "mechanism,latency_ms,read_p90_ms,write_p90_ms\n";
  for (const auto& r : rows) {
    out << to_string(r.mechanism) << ',' << format_number(to_ms(r.one_way_mean)) << ','
        << format_number(r.read.p90_ms) << ',' << format_number(r.write.p90_ms) << '\n';
  }
  return out.str();
}

RunResult experiment_availability(Q2Variant v, std::uint64_t seed) { return run_once(q2_config(v, seed)); }

SkewRow skew_row(const RunResult& r, double zipf_a) {
  SkewRow row;
  row.zipf_a = zipf_a;
  if (!r.failover || !r.failover->election || !r.failover->lease_acquired) return row;
  row.limbo_entries = r.failover->limbo_entries;
  for (const auto& e : r.history) {
    if (e.op != OpType::Read || e.start < *r.failover->election || e.start >= *r.failover->lease_acquired) {
      continue;
    }
    ++row.reads_in_window;
    if (e.success) ++row.reads_ok;
  }
  return row;
}

std::vector<SkewRow> experiment_skewness(std::uint64_t seed, const std::vector<double>& exponents) {
  std::vector<SkewRow> rows;
  for (double a : exponents) rows.push_back(skew_row(run_once(q3_config(a, seed)), a));
  return rows;
}

std::string skewness_csv(const std::vector<SkewRow>& rows) {
  std::ostringstream out;
  out << "zipf_a,limbo_entries,reads_in_window,reads_ok,success_rate\n";
  for (const auto& r : rows) {
    out << format_number(r.zipf_a) << ',' << r.limbo_entries << ',' << r.reads_in_window << ','
        << r.reads_ok << ',' << format_number(r.success_rate()) << '\n';
  }
  return out.str();
}

}  // namespace lgsim
