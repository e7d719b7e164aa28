#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "claimlock/explorer.hpp"

using namespace claimlock;

namespace {

ExplorerConfig config(std::uint32_t processes, std::uint32_t cycles,
                      Defect defect = Defect::kNone) {
  ExplorerConfig c;
  c.processes = processes;
  c.cycles = cycles;
  c.defect = defect;
  return c;
}

const ScenarioRow& row(const ExplorationReport& rep, Scenario id) {
  for (const auto& r : rep.scenarios) {
    if (r.id == id) return r;
  }
  REQUIRE(false);
  return rep.scenarios.front();
}

std::uint64_t oracle_violations(const ExplorationReport& rep,
                                const std::string& name) {
  const OracleReport* o = rep.oracle(name);
  REQUIRE(o != nullptr);
  return o->violations;
}

}  // namespace

TEST_CASE("one process, one cycle: a single clean path costing three CASes") {
  ExplorationReport rep = explore(config(1, 1));
  CHECK(rep.complete);
  CHECK(rep.all_ok());
  CHECK(rep.paths == 1);

  const ScenarioRow& fast = row(rep, Scenario::kUnclaimed);
  CHECK(fast.hits == 1);
  CHECK(fast.cas_min == 3);
  CHECK(fast.cas_max == 3);
  for (const auto& r : rep.scenarios) {
    if (r.id != Scenario::kUnclaimed) CHECK(r.hits == 0);
  }
  CHECK(rep.link_retry_max == 0);
}

TEST_CASE("two processes, one cycle: clean, and every claim branch reached") {
  ExplorationReport rep = explore(config(2, 1));
  CHECK(rep.complete);
  CHECK(rep.all_ok());
  CHECK(rep.paths > 1);

  for (const auto& r : rep.scenarios) {
    INFO("scenario ", r.name);
    CHECK(r.hits > 0);
    CHECK(r.within_bounds);
  }
  CHECK(rep.link_retry_max <= 1);  // (N-1) * cycles
}

TEST_CASE("two processes, two cycles: still clean") {
  ExplorationReport rep = explore(config(2, 2));
  CHECK(rep.complete);
  CHECK(rep.all_ok());
  CHECK(rep.link_retry_max <= 2);
}

TEST_CASE("exploration is deterministic run to run") {
  ExplorationReport a = explore(config(2, 1));
  ExplorationReport b = explore(config(2, 1));
  CHECK(a.states == b.states);
  CHECK(a.edges == b.edges);
  CHECK(a.paths == b.paths);
  REQUIRE(a.scenarios.size() == b.scenarios.size());
  for (std::size_t i = 0; i < a.scenarios.size(); ++i) {
    CHECK(a.scenarios[i].hits == b.scenarios[i].hits);
    CHECK(a.scenarios[i].cas_min == b.scenarios[i].cas_min);
    CHECK(a.scenarios[i].cas_max == b.scenarios[i].cas_max);
  }
}

TEST_CASE("same begin order, different grant order: a witness exists") {
  NondetWitness w = find_nondeterminism_witness(1);
  REQUIRE(w.found);
  CHECK(w.begin_order.size() == 2);
  CHECK(w.end_order_a.size() == 2);
  CHECK(w.end_order_b.size() == 2);
  CHECK(w.end_order_a != w.end_order_b);
  CHECK_FALSE(w.trace_a.empty());
  CHECK_FALSE(w.trace_b.empty());
}

TEST_CASE("a blind owner store is caught by the linearity check") {
  ExplorationReport rep = explore(config(2, 1, Defect::kBlindOwnerStore));
  CHECK(rep.complete);
  CHECK_FALSE(rep.all_ok());
  CHECK(oracle_violations(rep, "owner_linearity") > 0);
  const OracleReport* o = rep.oracle("owner_linearity");
  REQUIRE(o->first.has_value());
  CHECK_FALSE(o->first->trace.empty());
}

TEST_CASE("a dropped wake CAS is caught as a deadlock") {
  ExplorationReport rep = explore(config(2, 1, Defect::kDropWakeCas));
  CHECK(rep.complete);
  CHECK_FALSE(rep.all_ok());
  CHECK(oracle_violations(rep, "deadlock_freedom") > 0);
}

TEST_CASE("granting while parked is caught by the state safety check") {
  ExplorationReport rep = explore(config(2, 1, Defect::kGrantWhileParking));
  CHECK(rep.complete);
  CHECK_FALSE(rep.all_ok());
  CHECK(oracle_violations(rep, "state_safety") > 0);
}

TEST_CASE("an exhausted state budget reports the run as incomplete") {
  ExplorerConfig c = config(2, 1);
  c.max_states = 50;
  ExplorationReport rep = explore(c);
  CHECK_FALSE(rep.complete);
  CHECK_FALSE(rep.all_ok());
}
