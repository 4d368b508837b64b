#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgsim/cluster.hpp"
#include "lgsim/sim_kernel.hpp"

namespace lgsim {

enum class OpType { ListAppend, Read };

/// One operation as seen by an omniscient observer. For appends `values`
/// holds the single appended value; for reads, the returned list.
struct ClientLogEntry {
  OpType op = OpType::Read;
  SimTime start{};
  std::optional<SimTime> exec;
  SimTime end{};
  std::string key;
  std::vector<std::string> values;
  bool success = false;

  const std::string& value() const { return values.at(0); }
  friend bool operator==(const ClientLogEntry&, const ClientLogEntry&) = default;
};

using History = std::vector<ClientLogEntry>;

class HistoryParseError : public std::runtime_error {
 public:
  HistoryParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Tab-separated: op, start_ns, exec_ns or "-", end_ns, key, values
/// (comma-separated), success (1/0). Lines starting with '#' are comments.
std::string format_entry(const ClientLogEntry& e);
void dump_history(std::ostream& out, const History& h);
std::string dump_history(const History& h);
ClientLogEntry parse_entry(const std::string& line, std::size_t line_no = 0);
History parse_history(std::istream& in);
History parse_history(const std::string& text);

enum class ArrivalKind { Fixed, Poisson };
enum class TargetPolicy { Omniscient, Sticky };

std::string to_string(ArrivalKind k);
std::string to_string(TargetPolicy p);
ArrivalKind parse_arrival(const std::string& s);
TargetPolicy parse_target_policy(const std::string& s);

struct WorkloadSpec {
  ArrivalKind arrival = ArrivalKind::Fixed;
  /// Per-client gap (fixed) or mean gap (Poisson).
  Duration gap = std::chrono::microseconds(300);
  int clients = 1;
  double write_fraction = 1.0 / 3.0;
  std::size_t keys = 1000;
  /// 0 means uniform.
  double zipf_a = 0.0;
  std::size_t value_size = 1024;
  Duration duration = std::chrono::seconds(3);
  /// 0 means unbounded.
  std::size_t max_ops = 0;
  TargetPolicy read_policy = TargetPolicy::Omniscient;
  TargetPolicy write_policy = TargetPolicy::Omniscient;
  /// 0 means twice the election timeout.
  Duration timeout{};

  void validate() const;
};

/// Open-loop clients issuing list appends and reads against a cluster.
class Workload {
 public:
  Workload(Cluster& cluster, WorkloadSpec spec, const Rng& master);

  /// Schedules arrivals over [begin, begin + duration).
  void start(SimTime begin);
  /// Fills commit instants of failed writes that some leader committed.
  void finalize();

  const History& history() const { return history_; }
  std::size_t outstanding() const { return outstanding_; }
  Duration timeout() const { return timeout_; }
  const WorkloadSpec& spec() const { return spec_; }

 private:
  struct Client {
    int id = 0;
    Rng rng;
    std::uint64_t seq = 0;
    std::optional<NodeId> read_target;
    std::optional<NodeId> write_target;
  };

  void arrive(std::size_t client);
  void dispatch(Client& c);
  std::optional<NodeId> target(Client& c, bool write);
  void complete(std::size_t op, bool ok, std::optional<SimTime> exec, std::vector<std::string> values);
  void burst(NodeId leader, int count);
  std::string key_for(Rng& rng);

  Cluster& cluster_;
  WorkloadSpec spec_;
  Duration timeout_;
  ZipfDistribution keys_;
  std::vector<Client> clients_;
  Rng limbo_rng_;
  SimTime end_{};
  std::size_t dispatched_ = 0;
  std::size_t outstanding_ = 0;
  History history_;
  std::vector<std::optional<EventId>> timeouts_;
  std::vector<bool> done_;
};

}  // namespace lgsim
