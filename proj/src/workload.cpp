#include "lgsim/workload.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace lgsim {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    std::size_t pos = s.find(sep, begin);
    out.push_back(s.substr(begin, pos - begin));
    if (pos == std::string::npos) break;
    begin = pos + 1;
  }
  return out;
}

std::int64_t parse_ns(const std::string& s, std::size_t line, const char* field) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || v < 0) {
    throw HistoryParseError(line, std::string("bad ") + field + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_entry(const ClientLogEntry& e) {
  std::string out = e.op == OpType::ListAppend ? "append" : "read";
  out += '\t' + std::to_string(nanos(e.start));
  out += '\t' + (e.exec ? std::to_string(nanos(*e.exec)) : std::string("-"));
  out += '\t' + std::to_string(nanos(e.end));
  out += '\t' + e.key + '\t';
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    if (i) out += ',';
    out += e.values[i];
  }
  out += e.success ? "\t1" : "\t0";
  return out;
}

void dump_history(std::ostream& out, const History& h) {
  out << "# op\tstart_ns\texec_ns\tend_ns\tkey\tvalue\tsuccess\n";
  for (const auto& e : h) out << format_entry(e) << '\n';
}

std::string dump_history(const History& h) {
  std::ostringstream out;
  dump_history(out, h);
  return out.str();
}

ClientLogEntry parse_entry(const std::string& line, std::size_t line_no) {
  auto f = split(line, '\t');
  if (f.size() != 7) throw HistoryParseError(line_no, "expected 7 tab-separated fields");
  ClientLogEntry e;
  if (f[0] == "append") {
    e.op = OpType::ListAppend;
  } else if (f[0] == "read") {
    e.op = OpType::Read;
  } else {
    throw HistoryParseError(line_no, "unknown op '" + f[0] + "'");
  }
  e.start = at(Duration{parse_ns(f[1], line_no, "start")});
  if (f[2] != "-") e.exec = at(Duration{parse_ns(f[2], line_no, "exec")});
  e.end = at(Duration{parse_ns(f[3], line_no, "end")});
  if (e.end < e.start) throw HistoryParseError(line_no, "end before start");
  if (f[4].empty()) throw HistoryParseError(line_no, "empty key");
  e.key = f[4];
  if (!f[5].empty()) e.values = split(f[5], ',');
  if (e.op == OpType::ListAppend && e.values.size() != 1) {
    throw HistoryParseError(line_no, "append needs exactly one value");
  }
  if (f[6] != "0" && f[6] != "1") throw HistoryParseError(line_no, "success must be 0 or 1");
  e.success = f[6] == "1";
  return e;
}

History parse_history(std::istream& in) {
  History h;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    h.push_back(parse_entry(line, n));
  }
  return h;
}

History parse_history(const std::string& text) {
  std::istringstream in(text);
  return parse_history(in);
}

std::string to_string(ArrivalKind k) { return k == ArrivalKind::Fixed ? "fixed" : "poisson"; }
std::string to_string(TargetPolicy p) { return p == TargetPolicy::Omniscient ? "omniscient" : "sticky"; }

ArrivalKind parse_arrival(const std::string& s) {
  if (s == "fixed") return ArrivalKind::Fixed;
  if (s == "poisson") return ArrivalKind::Poisson;
  throw std::invalid_argument("unknown arrival '" + s + "'");
}

TargetPolicy parse_target_policy(const std::string& s) {
  if (s == "omniscient") return TargetPolicy::Omniscient;
  if (s == "sticky") return TargetPolicy::Sticky;
  throw std::invalid_argument("unknown target policy '" + s + "'");
}

void WorkloadSpec::validate() const {
  if (gap <= Duration::zero()) throw std::invalid_argument("workload.gap must be positive");
  if (clients < 1) throw std::invalid_argument("workload.clients must be positive");
  if (write_fraction < 0.0 || write_fraction > 1.0) {
    throw std::invalid_argument("workload.write_fraction must lie in [0, 1]");
  }
  if (keys < 1) throw std::invalid_argument("workload.keys must be positive");
  if (zipf_a < 0.0) throw std::invalid_argument("workload.zipf_a must be non-negative");
  if (duration < Duration::zero()) throw std::invalid_argument("workload.duration must be non-negative");
  if (timeout < Duration::zero()) throw std::invalid_argument("workload.timeout must be non-negative");
}

Workload::Workload(Cluster& cluster, WorkloadSpec spec, const Rng& master)
    : cluster_(cluster),
      spec_(spec),
      timeout_(spec.timeout > Duration::zero() ? spec.timeout
                                               : 2 * cluster.config().mechanism.election_timeout),
      keys_(spec.zipf_a, spec.keys),
      limbo_rng_(master.derive("limbo")) {
  spec_.validate();
  for (int i = 0; i < spec_.clients; ++i) {
    clients_.push_back(Client{i, master.derive("client" + std::to_string(i)), 0, {}, {}});
  }
  cluster_.set_limbo_burst_handler([this](NodeId leader, int count) { burst(leader, count); });
}

std::string Workload::key_for(Rng& rng) { return "k" + std::to_string(keys_(rng)); }

void Workload::start(SimTime begin) {
  end_ = begin + spec_.duration;
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    Duration first = spec_.arrival == ArrivalKind::Fixed
                         ? spec_.gap * static_cast<std::int64_t>(i) / spec_.clients
                         : sample_interarrival_poisson(clients_[i].rng, spec_.gap);
    SimTime t = begin + first;
    if (t < end_) cluster_.loop().schedule_at(t, [this, i] { arrive(i); });
  }
}

void Workload::arrive(std::size_t client) {
  if (spec_.max_ops != 0 && dispatched_ >= spec_.max_ops) return;
  Client& c = clients_[client];
  dispatch(c);
  Duration gap = spec_.arrival == ArrivalKind::Fixed ? spec_.gap
                                                     : sample_interarrival_poisson(c.rng, spec_.gap);
  SimTime next = cluster_.loop().now() + gap;
  if (next < end_) cluster_.loop().schedule_at(next, [this, client] { arrive(client); });
}

std::optional<NodeId> Workload::target(Client& c, bool write) {
  auto policy = write ? spec_.write_policy : spec_.read_policy;
  auto& sticky = write ? c.write_target : c.read_target;
  if (policy == TargetPolicy::Sticky && sticky) return sticky;
  auto leader = cluster_.leader();
  if (policy == TargetPolicy::Sticky) sticky = leader;
  return leader;
}

void Workload::dispatch(Client& c) {
  ++dispatched_;
  bool write = c.rng.bernoulli(spec_.write_fraction);
  ClientLogEntry e;
  e.op = write ? OpType::ListAppend : OpType::Read;
  e.start = cluster_.loop().now();
  e.key = key_for(c.rng);
  if (write) e.values = {"c" + std::to_string(c.id) + "-" + std::to_string(c.seq++)};
  std::size_t op = history_.size();
  history_.push_back(e);
  timeouts_.emplace_back();
  done_.push_back(false);
  ++outstanding_;

  auto node = target(c, write);
  if (!node) {
    complete(op, false, std::nullopt, {});
    return;
  }
  std::size_t client = static_cast<std::size_t>(c.id);
  timeouts_[op] = cluster_.loop().schedule(timeout_, [this, op, client, write] {
    timeouts_[op].reset();
    auto& cl = clients_[client];
    (write ? cl.write_target : cl.read_target).reset();
    complete(op, false, std::nullopt, {});
  });
  if (write) {
    cluster_.submit_write(*node, ListAppend{e.key, e.values[0]},
                          [this, op, client](const WriteResult& r) {
                            if (r.status == OpStatus::NotLeader) clients_[client].write_target.reset();
                            bool ok = r.status == OpStatus::Ok;
                            complete(op, ok, ok ? std::optional<SimTime>(r.commit_time) : std::nullopt, {});
                          });
  } else {
    cluster_.submit_read(*node, e.key, [this, op, client](const ReadResult& r) {
      if (r.status == OpStatus::NotLeader) clients_[client].read_target.reset();
      bool ok = r.status == OpStatus::Ok;
      complete(op, ok, ok ? std::optional<SimTime>(r.exec_time) : std::nullopt, r.values);
    });
  }
}

void Workload::complete(std::size_t op, bool ok, std::optional<SimTime> exec,
                        std::vector<std::string> values) {
  if (done_[op]) return;
  done_[op] = true;
  --outstanding_;
  if (timeouts_[op]) {
    cluster_.loop().cancel(*timeouts_[op]);
    timeouts_[op].reset();
  }
  auto& e = history_[op];
  e.end = cluster_.loop().now();
  e.success = ok;
  e.exec = exec;
  if (e.op == OpType::Read) e.values = ok ? std::move(values) : std::vector<std::string>{};
}

void Workload::burst(NodeId leader, int count) {
  auto& node = cluster_.node(leader);
  std::vector<Command> commands;
  for (int k = 0; k < count; ++k) {
    ClientLogEntry e;
    e.op = OpType::ListAppend;
    e.start = cluster_.loop().now();
    e.end = e.start + timeout_;
    e.key = key_for(limbo_rng_);
    e.values = {"limbo-" + std::to_string(k)};
    e.success = false;
    history_.push_back(e);
    timeouts_.emplace_back();
    done_.push_back(true);
    commands.push_back(ListAppend{e.key, e.values[0]});
  }
  // One round of replication, so followers hold every entry in order when
  // the leader dies.
  node.client_write_batch(std::move(commands), [](const WriteResult&) {});
}

void Workload::finalize() {
  for (std::size_t i = 0; i < history_.size(); ++i) {
    auto& e = history_[i];
    if (!done_[i]) {
      // Still in flight when the run stopped: report as timed out.
      e.end = std::max(e.end, e.start + timeout_);
      e.success = false;
      e.exec.reset();
      if (e.op == OpType::Read) e.values.clear();
    }
    if (e.op == OpType::ListAppend && !e.success) {
      e.exec = cluster_.first_commit(e.value());
    }
  }
}

}  // namespace lgsim
