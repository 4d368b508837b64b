#include "lgsim/network.hpp"

#include <memory>

namespace lgsim {

std::string to_string(const NodeRef& ref) {
  switch (ref.kind) {
    case NodeRef::Kind::Id:
      return std::to_string(ref.id);
    case NodeRef::Kind::Leader:
      return "leader";
    case NodeRef::Kind::LastCrashed:
      return "last_crashed";
    case NodeRef::Kind::Others:
      return "others";
  }
  return "?";
}

NodeRef parse_node_ref(const std::string& text) {
  if (text == "leader") return NodeRef::leader();
  if (text == "last_crashed") return NodeRef::last_crashed();
  if (text == "others") return NodeRef::others();
  std::size_t used = 0;
  int id = -1;
  try {
    id = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || id < 0) {
    throw std::invalid_argument("bad node reference '" + text + "'");
  }
  return NodeRef::node(id);
}

namespace {

void check_ref(const NodeRef& ref, int n_nodes, bool allow_others) {
  if (ref.kind == NodeRef::Kind::Id && (ref.id < 0 || ref.id >= n_nodes)) {
    throw std::invalid_argument("fault plan: node " + std::to_string(ref.id) + " out of range");
  }
  if (ref.kind == NodeRef::Kind::Others && !allow_others) {
    throw std::invalid_argument("fault plan: 'others' only allowed as a partition side");
  }
}

void check_instant(Duration t, const char* what) {
  if (t < Duration::zero()) {
    throw std::invalid_argument(std::string("fault plan: negative ") + what + " instant");
  }
}

}  // namespace

void validate(const FaultPlan& plan, int n_nodes) {
  for (const auto& c : plan.crashes) {
    check_ref(c.node, n_nodes, false);
    check_instant(c.at, "crash");
  }
  for (const auto& r : plan.restarts) {
    check_ref(r.node, n_nodes, false);
    check_instant(r.at, "restart");
  }
  for (const auto& p : plan.partitions) {
    check_instant(p.from, "partition");
    if (p.until <= p.from) {
      throw std::invalid_argument("fault plan: partition must end after it starts");
    }
    if (p.side_a.empty() || p.side_b.empty()) {
      throw std::invalid_argument("fault plan: partition sides must be non-empty");
    }
    for (const auto& r : p.side_a) check_ref(r, n_nodes, false);
    for (const auto& r : p.side_b) check_ref(r, n_nodes, true);
  }
  for (const auto& c : plan.clock_faults) {
    check_ref(c.node, n_nodes, false);
    check_instant(c.at, "clock fault");
    if (c.lag < Duration::zero()) {
      throw std::invalid_argument("fault plan: clock lag must be non-negative");
    }
  }
  if (plan.limbo_burst < 0) {
    throw std::invalid_argument("fault plan: limbo_burst must be non-negative");
  }
  if (plan.limbo_burst > 0 && plan.crashes.empty()) {
    throw std::invalid_argument("fault plan: limbo_burst needs a crash");
  }
}

namespace {

std::vector<NodeId> resolve_all(FaultTarget& target, const std::vector<NodeRef>& refs,
                                const std::vector<NodeId>& exclude) {
  std::vector<NodeId> out;
  for (const auto& r : refs) {
    for (NodeId id : target.resolve(r, exclude)) {
      if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    }
  }
  return out;
}

}  // namespace

void apply_fault_plan(EventLoop& loop, const FaultPlan& plan, FaultTarget& target) {
  // The burst goes with whichever crash fires first.
  std::size_t burst_crash = plan.crashes.size();
  for (std::size_t i = 0; i < plan.crashes.size(); ++i) {
    if (burst_crash == plan.crashes.size() || plan.crashes[i].at < plan.crashes[burst_crash].at) {
      burst_crash = i;
    }
  }
  for (std::size_t i = 0; i < plan.crashes.size(); ++i) {
    const auto& c = plan.crashes[i];
    int burst = i == burst_crash ? plan.limbo_burst : 0;
    loop.schedule(c.at, [&target, ref = c.node, burst] {
      for (NodeId id : target.resolve(ref, {})) {
        if (burst > 0) target.limbo_burst(id, burst);
        target.crash_node(id);
      }
    });
  }
  for (const auto& r : plan.restarts) {
    loop.schedule(r.at, [&target, ref = r.node] {
      for (NodeId id : target.resolve(ref, {})) target.restart_node(id);
    });
  }
  for (const auto& p : plan.partitions) {
    auto handle = std::make_shared<std::optional<std::uint64_t>>();
    loop.schedule(p.from, [&target, p, handle] {
      auto a = resolve_all(target, p.side_a, {});
      auto b = resolve_all(target, p.side_b, a);
      if (!a.empty() && !b.empty()) *handle = target.cut(a, b);
    });
    if (p.until != Duration::max()) {
      loop.schedule(p.until, [&target, handle] {
        if (*handle) target.heal(**handle);
      });
    }
  }
  for (const auto& c : plan.clock_faults) {
    loop.schedule(c.at, [&target, ref = c.node, lag = c.lag] {
      for (NodeId id : target.resolve(ref, {})) target.break_clock(id, lag);
    });
  }
}

}  // namespace lgsim
