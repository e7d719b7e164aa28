#include <cstdint>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "claimlock/explorer.hpp"
#include "claimlock/report.hpp"
#include "claimlock/scheduler.hpp"

namespace {

constexpr int kExitClean = 0;
constexpr int kExitViolation = 1;
constexpr int kExitBudget = 2;
constexpr int kExitUsage = 64;

int run_explore(const claimlock::ExplorerConfig& config,
                const std::string& output, bool table_only) {
  claimlock::ExplorationReport rep = claimlock::explore(config);
  if (config.processes == 2 && config.defect == claimlock::Defect::kNone) {
    rep.witness = claimlock::find_nondeterminism_witness(config.cycles);
  }
  if (table_only) {
    claimlock::print_cas_table(rep, std::cout);
  } else {
    claimlock::print_summary(rep, std::cout);
  }
  if (!output.empty()) {
    claimlock::write_json_report(rep, output);
    std::cout << "report written to " << output << '\n';
  }
  if (!rep.complete) {
    std::cout << "state budget exhausted after " << rep.states << " states\n";
    return kExitBudget;
  }
  bool scenarios_ok = true;
  if (table_only) {
    for (const auto& row : rep.scenarios) {
      if (row.hits == 0 || !row.within_bounds) scenarios_ok = false;
    }
  }
  return rep.all_ok() && scenarios_ok ? kExitClean : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "claim/release mutex checker: exhaustive interleaving exploration and "
      "multi-threaded stress"};
  app.require_subcommand(1);

  std::map<std::string, claimlock::Defect> defect_names{
      {"none", claimlock::Defect::kNone},
      {"blind-owner-store", claimlock::Defect::kBlindOwnerStore},
      {"drop-wake-cas", claimlock::Defect::kDropWakeCas},
      {"grant-while-parking", claimlock::Defect::kGrantWhileParking}};

  claimlock::ExplorerConfig econfig;
  std::string output;
  bool long_run = false;
  auto* explore_cmd = app.add_subcommand(
      "explore", "enumerate every interleaving and check the lock's contracts");
  explore_cmd->add_option("--processes", econfig.processes,
                          "number of competing processes (1..4)")
      ->check(CLI::Range(1u, 4u));
  explore_cmd->add_option("--cycles", econfig.cycles,
                          "claim/release rounds per process (1..2)")
      ->check(CLI::Range(1u, 2u));
  explore_cmd
      ->add_option("--inject-defect", econfig.defect,
                   "run with a known defect to confirm the checks catch it")
      ->transform(CLI::CheckedTransformer(defect_names, CLI::ignore_case));
  explore_cmd->add_option("--max-states", econfig.max_states,
                          "abort after this many distinct states");
  explore_cmd->add_option("--output", output, "write a JSON report here");
  explore_cmd->add_flag("--long-run", long_run,
                        "allow configurations that can take an hour");

  claimlock::StressConfig sconfig;
  auto* stress_cmd = app.add_subcommand(
      "stress", "hammer the native lock from a worker pool and audit counts");
  stress_cmd->add_option("--processes", sconfig.processes, "task count")
      ->check(CLI::Range(1u, 64u));
  stress_cmd->add_option("--iterations", sconfig.iterations,
                         "claim/release rounds per task");
  stress_cmd->add_option("--runners", sconfig.runners, "worker thread count")
      ->check(CLI::Range(1u, 64u));
  stress_cmd->add_option("--seed", sconfig.seed, "spawn-order shuffle seed");

  claimlock::ExplorerConfig rconfig;
  rconfig.processes = 3;
  rconfig.cycles = 2;
  std::string routput;
  auto* report_cmd = app.add_subcommand(
      "cas-report", "print the per-scenario claim cost table with verdicts");
  report_cmd->add_option("--processes", rconfig.processes,
                         "number of competing processes (1..4)")
      ->check(CLI::Range(1u, 4u));
  report_cmd->add_option("--cycles", rconfig.cycles,
                         "claim/release rounds per process (1..2)")
      ->check(CLI::Range(1u, 2u));
  report_cmd->add_option("--output", routput, "write a JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (explore_cmd->parsed()) {
      if (econfig.processes >= 4 && !long_run) {
        std::cerr << "explore with 4+ processes can run for an hour; pass "
                     "--long-run to confirm\n";
        return kExitUsage;
      }
      return run_explore(econfig, output, /*table_only=*/false);
    }
    if (stress_cmd->parsed()) {
      claimlock::StressResult res = claimlock::run_stress(sconfig);
      std::cout << "stress: processes=" << sconfig.processes
                << " iterations=" << sconfig.iterations
                << " runners=" << sconfig.runners << " seed=" << sconfig.seed
                << '\n';
      std::cout << "  counter=" << res.counter_observed << "/"
                << res.counter_expected << " grants=" << res.claims_granted
                << " parked=" << res.claims_parked
                << " releases=" << res.releases << '\n';
      std::cout << "  elapsed=" << res.elapsed_ms << "ms faults="
                << res.contract_faults
                << (res.stalled ? " (stalled)" : "") << '\n';
      if (!res.first_fault.empty()) {
        std::cout << "  first fault: " << res.first_fault << '\n';
      }
      std::cout << (res.ok() ? "PASS" : "FAIL") << '\n';
      return res.ok() ? kExitClean : kExitViolation;
    }
    return run_explore(rconfig, routput, /*table_only=*/true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitViolation;
  }
}
