#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "claimlock/instrumentation.hpp"
#include "claimlock/model_state.hpp"
#include "claimlock/protocol.hpp"

// Deterministic exhaustive interleaving exploration. Every reachable global
// state is expanded once (depth-first, pids in ascending order), every
// outgoing step of every reachable state is taken, and the oracles check
// each transition and each newly discovered state. Path counts are computed
// by dynamic programming over the deduplicated state graph.

namespace claimlock {

struct ExplorerConfig {
  std::uint32_t processes = 2;
  std::uint32_t cycles = 1;
  Defect defect = Defect::kNone;
  std::uint64_t max_states = 20'000'000;  // budget; exceeding it aborts
};

struct Violation {
  std::string oracle;
  std::string detail;
  std::vector<std::string> trace;  // one line per event from the initial state
};

struct OracleReport {
  std::string name;
  std::uint64_t violations = 0;
  std::optional<Violation> first;
  bool ok() const { return violations == 0; }
};

struct ScenarioRow {
  Scenario id = Scenario::kNone;
  std::string name;
  std::uint64_t hits = 0;
  std::uint32_t cas_min = 0;
  std::uint32_t cas_max = 0;
  double cas_mean = 0.0;
  std::uint32_t extra_max = 0;    // contention CASes beyond the branch cost
  std::uint32_t design_min = 0;
  std::uint32_t design_max = 0;
  bool unbounded_max = false;
  bool within_bounds = true;
};

// Two runs with the same begin_claim order but different grant order.
struct NondetWitness {
  bool found = false;
  std::vector<Pid> begin_order;
  std::vector<Pid> end_order_a;
  std::vector<Pid> end_order_b;
  std::vector<std::string> trace_a;
  std::vector<std::string> trace_b;
};

struct ExplorationReport {
  std::uint32_t processes = 0;
  std::uint32_t cycles = 0;
  std::string defect = "none";

  bool complete = false;  // false = state budget exhausted, results partial
  std::uint64_t states = 0;
  std::uint64_t edges = 0;
  std::uint64_t paths = 0;
  bool paths_saturated = false;

  std::vector<OracleReport> oracles;
  std::vector<ScenarioRow> scenarios;
  std::uint64_t claims_observed = 0;
  ReleaseStats release;
  std::uint32_t link_retry_max = 0;
  std::uint32_t link_retry_bound = 0;

  std::optional<NondetWitness> witness;

  const OracleReport* oracle(const std::string& name) const {
    for (const auto& o : oracles) {
      if (o.name == name) return &o;
    }
    return nullptr;
  }
  bool all_ok() const {
    if (!complete) return false;
    for (const auto& o : oracles) {
      if (!o.ok()) return false;
    }
    return true;
  }
};

// The oracle names, in report order.
inline const std::vector<std::string>& oracle_names() {
  static const std::vector<std::string> names = {
      "mutual_exclusion",  "fifo_fairness",   "state_safety",
      "state_automaton",   "owner_linearity", "queue_fifo",
      "queue_structure",   "ownership_cases", "fifo_handover",
      "deadlock_freedom",  "contract",        "scenario_classification",
      "cas_cost_bounds",
  };
  return names;
}

ExplorationReport explore(const ExplorerConfig& config);

// Searches (N=2) for the non-determinism witness: two complete runs whose
// begin_claim sequences match while their grant sequences differ.
NondetWitness find_nondeterminism_witness(std::uint32_t cycles = 1);

}  // namespace claimlock
