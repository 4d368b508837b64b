#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "lgsim/experiments.hpp"

using namespace lgsim;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& dir, const std::string& name, const std::string& body) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  out << body;
}

std::string fmt_ms(const std::optional<SimTime>& t, SimTime t0) {
  if (!t) return "-";
  std::ostringstream s;
  s << to_ms(*t - t0) << "ms";
  return s.str();
}

void print_summary(const RunResult& r, std::ostream& out) {
  std::size_t ok = 0;
  for (const auto& e : r.history) ok += e.success;
  out << "ops " << r.history.size() << " ok " << ok << " events " << r.events_executed << "\n";
  out << "read  p50 " << r.metrics.read.p50_ms << "ms p90 " << r.metrics.read.p90_ms << "ms p99 "
      << r.metrics.read.p99_ms << "ms (" << r.metrics.read.count << ")\n";
  out << "write p50 " << r.metrics.write.p50_ms << "ms p90 " << r.metrics.write.p90_ms << "ms p99 "
      << r.metrics.write.p99_ms << "ms (" << r.metrics.write.count << ")\n";
  std::map<std::string, int> kinds;
  for (const auto& e : r.events) ++kinds[to_string(e.kind)];
  if (!kinds.empty()) {
    out << "events";
    for (const auto& [k, n] : kinds) out << " " << k << "=" << n;
    out << "\n";
  }
  if (r.failover) {
    const auto& f = *r.failover;
    out << "crash " << fmt_ms(f.crash, r.t0) << " election " << fmt_ms(f.election, r.t0) << " leader "
        << f.new_leader << " limbo " << f.limbo_entries << " lease " << fmt_ms(f.lease_acquired, r.t0)
        << " old lease expiry " << fmt_ms(f.old_lease_expiry, r.t0) << "\n";
  }
  if (r.verdict) out << describe(*r.verdict, r.history) << "\n";
  for (const auto& v : r.violations) {
    out << "violation " << v.invariant << " at " << to_ms(v.at - r.t0) << "ms: " << v.detail << "\n";
  }
}

/// 0 when the run met its expectation, 1 otherwise.
int outcome(const RunResult& r) {
  bool lin = !r.verdict || r.verdict->linearizable;
  if (r.config.expect_linearizable) return lin && r.violations.empty() ? 0 : 1;
  return lin ? 1 : 0;
}

void save_run(const RunResult& r, const std::string& dir) {
  if (dir.empty()) return;
  write_file(dir, "config.txt", dump_config(r.config));
  write_file(dir, "history.tsv", dump_history(r.history));
  write_file(dir, "timeline.csv", timeline_csv(r.metrics));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LeaseGuard Raft simulator"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "run one simulation from a config file");
  std::string config_path;
  run->add_option("config", config_path, "key=value config file")->required();
  run->add_option("--seed", seed);
  run->add_option("--out-dir", out_dir);
  run->add_option("--set", overrides, "extra key=value overrides");

  auto* dump = app.add_subcommand("dump-config", "print a config with every key resolved");
  std::string dump_path;
  dump->add_option("config", dump_path);

  auto* sweep = app.add_subcommand("latency-sweep", "read and write p90 latency against network latency");
  std::string latencies = "1,5,10";
  std::string kinds = "inconsistent,quorum,ongaro,leaseguard";
  sweep->add_option("--seed", seed);
  sweep->add_option("--out-dir", out_dir);
  sweep->add_option("--latencies", latencies, "one-way means in ms");
  sweep->add_option("--mechanisms", kinds);

  auto* avail = app.add_subcommand("availability", "leader crash timeline for one variant");
  std::string variant;
  avail->add_option("variant", variant,
                    "inconsistent, quorum, log_lease, defer_commit, leaseguard, ongaro or all")
      ->required();
  avail->add_option("--seed", seed);
  avail->add_option("--out-dir", out_dir);

  auto* skew = app.add_subcommand("skewness", "limbo read success against key skew");
  std::string exponents = "0,0.5,1,1.5,2";
  skew->add_option("--seed", seed);
  skew->add_option("--out-dir", out_dir);
  skew->add_option("--exponents", exponents);

  auto* chk = app.add_subcommand("check", "check a history file for linearizability");
  std::string history_path;
  chk->add_option("history", history_path)->required();

  CLI11_PARSE(app, argc, argv);
  std::uint64_t s = seed.value_or(1);

  try {
    if (*run) {
      SimConfig c = load_config(config_path);
      for (const auto& o : overrides) c = parse_config(o, c);
      if (seed) c.cluster.seed = *seed;
      validate(c);
      auto r = run_once(c);
      print_summary(r, std::cout);
      save_run(r, out_dir);
      return outcome(r);
    }
    if (*dump) {
      SimConfig c = dump_path.empty() ? SimConfig{} : load_config(dump_path);
      std::cout << dump_config(c);
      return 0;
    }
    if (*sweep) {
      std::vector<Duration> means;
      for (const auto& l : split_list(latencies)) means.push_back(parse_duration(l + "ms"));
      std::vector<MechanismKind> ks;
      for (const auto& k : split_list(kinds)) ks.push_back(parse_mechanism_kind(k));
      auto csv = latency_csv(experiment_latency(s, means, ks));
      std::cout << csv;
      if (!out_dir.empty()) write_file(out_dir, "latency.csv", csv);
      return 0;
    }
    if (*avail) {
      std::vector<Q2Variant> vs = variant == "all" ? all_q2_variants() : std::vector{parse_q2_variant(variant)};
      int rc = 0;
      for (auto v : vs) {
        auto r = experiment_availability(v, s);
        std::cout << "== " << to_string(v) << "\n";
        print_summary(r, std::cout);
        if (!out_dir.empty()) {
          write_file(out_dir, to_string(v) + "_timeline.csv", timeline_csv(r.metrics));
          write_file(out_dir, to_string(v) + "_history.tsv", dump_history(r.history));
        }
        rc = std::max(rc, outcome(r));
      }
      return rc;
    }
    if (*skew) {
      std::vector<double> as;
      for (const auto& a : split_list(exponents)) as.push_back(std::stod(a));
      auto csv = skewness_csv(experiment_skewness(s, as));
      std::cout << csv;
      if (!out_dir.empty()) write_file(out_dir, "skewness.csv", csv);
      return 0;
    }
    if (*chk) {
      std::ifstream in(history_path);
      if (!in) throw ConfigError("cannot read " + history_path);
      History h = parse_history(in);
      auto v = check(h);
      std::cout << describe(v, h) << "\n";
      return v.linearizable ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const HistoryParseError& e) {
    std::cerr << "history error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
