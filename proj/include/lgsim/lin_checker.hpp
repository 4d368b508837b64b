#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgsim/workload.hpp"

namespace lgsim {

struct Witness {
  /// Position of the offending operation in the history.
  std::size_t op = 0;
  std::string key;
  std::string reason;
  std::vector<std::string> observed;
  /// Serialized state of the key the operation was checked against.
  std::vector<std::string> expected;
};

struct Verdict {
  bool linearizable = true;
  std::optional<Witness> witness;
};

std::string describe(const Verdict& v, const History& h);

/// Decides linearizability of per-key append-only list histories using the
/// recorded execution instants. Operations with equal instants may take
/// effect in any order; a failed append counts as applied (at its recorded
/// commit instant) exactly when some read observed its value.
Verdict check(const History& history);

class HistoryTooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exhaustive search over every serialization consistent with real-time
/// order. Ignores execution instants. At most kBruteForceLimit operations.
inline constexpr std::size_t kBruteForceLimit = 10;
Verdict brute_force_check(const History& history);

}  // namespace lgsim
