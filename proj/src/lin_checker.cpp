#include "lgsim/lin_checker.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace lgsim {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out + "]";
}

Verdict violation(std::size_t op, const ClientLogEntry& e, std::string reason,
                  std::vector<std::string> expected = {}) {
  Verdict v;
  v.linearizable = false;
  v.witness = Witness{op, e.key, std::move(reason), e.op == OpType::Read ? e.values : std::vector<std::string>{},
                      std::move(expected)};
  return v;
}

struct KeyChecker {
  const History& h;
  std::vector<std::string> fixed;
  /// Groups of appends whose relative order no read has pinned down yet.
  std::vector<std::vector<std::string>> pending;

  std::vector<std::string> expected() const {
    auto out = fixed;
    for (const auto& p : pending) out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  /// Matches a read against fixed + pending; returns the resolved prefix and
  /// the tail beyond it, or nullopt.
  std::optional<std::pair<std::vector<std::string>, std::vector<std::string>>> match(
      const std::vector<std::string>& observed) const {
    if (observed.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), observed.begin())) {
      return std::nullopt;
    }
    std::size_t pos = fixed.size();
    for (const auto& p : pending) {
      if (observed.size() < pos + p.size()) return std::nullopt;
      std::vector<std::string> slice(observed.begin() + pos, observed.begin() + pos + p.size());
      std::sort(slice.begin(), slice.end());
      if (slice != p) return std::nullopt;
      pos += p.size();
    }
    return std::make_pair(std::vector<std::string>(observed.begin(), observed.begin() + pos),
                          std::vector<std::string>(observed.begin() + pos, observed.end()));
  }

  std::optional<Verdict> group(const std::vector<std::size_t>& appends, const std::vector<std::size_t>& reads) {
    std::vector<std::string> added;
    for (auto op : appends) added.push_back(h[op].value());
    std::sort(added.begin(), added.end());
    if (reads.empty()) {
      if (!added.empty()) pending.push_back(std::move(added));
      return std::nullopt;
    }
    std::optional<std::vector<std::string>> resolved;
    std::vector<std::pair<std::vector<std::string>, std::size_t>> tails;
    for (auto op : reads) {
      const auto& r = h[op];
      auto m = match(r.values);
      if (!m) return violation(op, r, "read misses or misorders earlier appends", expected());
      if (resolved && *resolved != m->first) {
        return violation(op, r, "reads at one instant disagree on append order", *resolved);
      }
      resolved = m->first;
      std::set<std::string> seen;
      for (const auto& v : m->second) {
        if (!std::binary_search(added.begin(), added.end(), v) || !seen.insert(v).second) {
          return violation(op, r, "read observes value " + v + " not yet appended", expected());
        }
      }
      tails.emplace_back(std::move(m->second), op);
    }
    std::sort(tails.begin(), tails.end(),
              [](const auto& a, const auto& b) { return a.first.size() < b.first.size(); });
    const auto& longest = tails.back().first;
    for (const auto& [tail, op] : tails) {
      if (!std::equal(tail.begin(), tail.end(), longest.begin())) {
        return violation(op, h[op], "reads at one instant disagree on append order", expected());
      }
    }
    fixed = *resolved;
    fixed.insert(fixed.end(), longest.begin(), longest.end());
    pending.clear();
    std::vector<std::string> rest;
    for (const auto& v : added) {
      if (std::find(longest.begin(), longest.end(), v) == longest.end()) rest.push_back(v);
    }
    if (!rest.empty()) pending.push_back(std::move(rest));
    return std::nullopt;
  }
};

}  // namespace

std::string describe(const Verdict& v, const History& h) {
  if (v.linearizable) return "linearizable";
  std::ostringstream out;
  out << "not linearizable";
  if (v.witness) {
    const auto& w = *v.witness;
    out << ": op " << w.op;
    if (w.op < h.size()) out << " (" << format_entry(h[w.op]) << ")";
    out << ", key " << w.key << ": " << w.reason << "; observed " << join(w.observed) << ", expected "
        << join(w.expected);
  }
  return out.str();
}

Verdict check(const History& history) {
  // Values observed by successful reads, per key.
  std::unordered_map<std::string, std::unordered_set<std::string>> observed;
  std::map<std::string, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& e = history[i];
    if (e.op == OpType::Read && !e.success) continue;
    if (e.success) {
      if (!e.exec) return violation(i, e, "successful operation without execution instant");
      if (*e.exec < e.start || *e.exec > e.end) {
        return violation(i, e, "execution instant outside [start, end]");
      }
    }
    if (e.op == OpType::Read) {
      for (const auto& v : e.values) observed[e.key].insert(v);
    }
    by_key[e.key].push_back(i);
  }

  for (const auto& [key, ops] : by_key) {
    std::vector<std::pair<SimTime, std::size_t>> timeline;
    std::unordered_set<std::string> applied;
    const auto& seen = observed[key];
    for (auto i : ops) {
      const auto& e = history[i];
      if (e.op == OpType::ListAppend) {
        bool take = e.success || (seen.count(e.value()) && e.exec.has_value());
        if (!take) continue;
        if (!applied.insert(e.value()).second) return violation(i, e, "duplicate appended value");
      }
      timeline.emplace_back(*e.exec, i);
    }
    std::stable_sort(timeline.begin(), timeline.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    KeyChecker kc{history, {}, {}};
    for (std::size_t g = 0; g < timeline.size();) {
      std::size_t end = g;
      std::vector<std::size_t> appends, reads;
      while (end < timeline.size() && timeline[end].first == timeline[g].first) {
        std::size_t op = timeline[end].second;
        (history[op].op == OpType::ListAppend ? appends : reads).push_back(op);
        ++end;
      }
      if (auto v = kc.group(appends, reads)) return *v;
      g = end;
    }
  }
  return Verdict{};
}

namespace {

struct BruteForce {
  const History& h;
  std::vector<std::size_t> ops;
  std::vector<bool> mandatory;
  std::vector<std::uint32_t> preds;
  std::map<std::string, std::vector<std::string>> kv;
  std::set<std::pair<std::uint32_t, std::string>> dead;

  std::string state_key() const {
    std::string s;
    for (const auto& [k, vs] : kv) {
      s += k + "=";
      for (const auto& v : vs) s += v + ",";
      s += ";";
    }
    return s;
  }

  bool search(std::uint32_t placed) {
    bool complete = true;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (mandatory[i] && !(placed & (1u << i))) complete = false;
    }
    if (complete) return true;
    auto memo = std::make_pair(placed, state_key());
    if (dead.count(memo)) return false;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (placed & (1u << i) || (preds[i] & ~placed)) continue;
      const auto& e = h[ops[i]];
      auto& list = kv[e.key];
      if (e.op == OpType::Read) {
        if (list != e.values) continue;
        if (search(placed | (1u << i))) return true;
      } else {
        list.push_back(e.value());
        bool ok = search(placed | (1u << i));
        kv[e.key].pop_back();
        if (ok) return true;
      }
    }
    dead.insert(std::move(memo));
    return false;
  }
};

}  // namespace

Verdict brute_force_check(const History& history) {
  if (history.size() > kBruteForceLimit) {
    throw HistoryTooLarge("brute_force_check: history has " + std::to_string(history.size()) +
                          " operations, limit is " + std::to_string(kBruteForceLimit));
  }
  BruteForce bf{history, {}, {}, {}, {}, {}};
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& e = history[i];
    if (e.op == OpType::Read && !e.success) continue;
    bf.ops.push_back(i);
    bf.mandatory.push_back(e.success);
  }
  bf.preds.assign(bf.ops.size(), 0);
  for (std::size_t a = 0; a < bf.ops.size(); ++a) {
    const auto& ea = history[bf.ops[a]];
    // A failed append never completed, so it precedes nothing in real time.
    if (!ea.success) continue;
    for (std::size_t b = 0; b < bf.ops.size(); ++b) {
      if (a != b && ea.end < history[bf.ops[b]].start) bf.preds[b] |= 1u << a;
    }
  }
  if (bf.search(0)) return Verdict{};
  Verdict v;
  v.linearizable = false;
  Witness w;
  w.reason = "no serialization respects real-time order";
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].op == OpType::Read && history[i].success) {
      w.op = i;
      w.key = history[i].key;
      w.observed = history[i].values;
      break;
    }
  }
  v.witness = w;
  return v;
}

}  // namespace lgsim
