#include "claimlock/explorer.hpp"

#include <algorithm>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace claimlock {
namespace {

struct VecSink final : TraceSink {
  std::vector<TraceEvent> events;
  void on_event(const TraceEvent& ev) override { events.push_back(ev); }
};

struct StepResult {
  std::vector<TraceEvent> events;
  bool claim_completed = false;
  bool claim_granted = false;
  Scenario scenario = Scenario::kNone;
  OpCounters claim_counters;
  bool release_completed = false;
  OpCounters release_counters;
  bool contract_fault = false;
  std::string fault_what;
};

bool enabled(const ModelState& s, Pid p) {
  const ProcCore& pc = s.procs[p];
  switch (pc.phase) {
    case Phase::Claiming:
    case Phase::Releasing:
      return true;
    case Phase::Parked:
      // A parked process re-enables exactly when its schedule signal lands;
      // the pre-signal polls of a real yield loop are no-op self-edges and
      // are elided.
      return pc.state == ProcState::Scheduled;
    case Phase::Done:
      return false;
  }
  return false;
}

// Advance process p by exactly one shared-memory access, maintaining the
// claim -> (park -> wake) -> release -> next-cycle script around the
// protocol machines. A ContractViolation from inside the machines is
// reported, not thrown: the explorer treats the faulted edge as terminal.
StepResult step_process(ModelState& s, Pid p, Defect defect) {
  StepResult out;
  VecSink sink;
  ProcCore& pc = s.procs[p];
  ModelMem mem(s);
  OpCtx ctx;
  ctx.pid = p;
  ctx.sink = &sink;
  ctx.hooks = nullptr;
  ctx.cas_total = pc.counters.cas_total;
  ctx.link_retries = pc.counters.link_retries;
  ctx.help_swings = pc.counters.help_swings;
  try {
    switch (pc.phase) {
      case Phase::Claiming: {
        if (pc.claim.step(mem, ctx) == StepStatus::Done) {
          out.claim_completed = true;
          out.claim_granted = pc.claim.granted();
          out.scenario = pc.claim.scenario;
          out.claim_counters = {ctx.cas_total, ctx.link_retries,
                                ctx.help_swings};
          pc.claim = ClaimMachine{};
          pc.claim.pid = p;
          pc.claim.defect = defect;
          ctx.cas_total = ctx.link_retries = ctx.help_swings = 0;
          if (out.claim_granted) {
            pc.phase = Phase::Releasing;
            pc.release = ReleaseMachine{};
            pc.release.pid = p;
            pc.release.defect = defect;
          } else {
            pc.phase = Phase::Parked;
          }
        }
        break;
      }
      case Phase::Parked: {
        finish_parked_claim(mem, p, ctx);
        pc.phase = Phase::Releasing;
        pc.release = ReleaseMachine{};
        pc.release.pid = p;
        pc.release.defect = defect;
        ctx.cas_total = ctx.link_retries = ctx.help_swings = 0;
        break;
      }
      case Phase::Releasing: {
        if (pc.release.step(mem, ctx) == StepStatus::Done) {
          out.release_completed = true;
          out.release_counters = {ctx.cas_total, ctx.link_retries,
                                  ctx.help_swings};
          pc.release = ReleaseMachine{};
          pc.release.pid = p;
          pc.release.defect = defect;
          ctx.cas_total = ctx.link_retries = ctx.help_swings = 0;
          pc.cycle += 1;
          pc.phase = pc.cycle >= s.cycles ? Phase::Done : Phase::Claiming;
        }
        break;
      }
      case Phase::Done:
        throw ContractViolation("step on finished process");
    }
  } catch (const ContractViolation& e) {
    out.contract_fault = true;
    out.fault_what = e.what();
  }
  pc.counters = {ctx.cas_total, ctx.link_retries, ctx.help_swings};
  out.events = std::move(sink.events);
  return out;
}

using TraceFn = std::function<std::vector<std::string>()>;

class OracleHub {
 public:
  explicit OracleHub(ExplorationReport& rep) : rep_(rep) {
    for (const auto& name : oracle_names()) {
      rep_.oracles.push_back(OracleReport{name, 0, std::nullopt});
    }
  }

  void flag(const std::string& oracle, std::string detail, const TraceFn& tf) {
    for (auto& o : rep_.oracles) {
      if (o.name == oracle) {
        ++o.violations;
        if (!o.first) o.first = Violation{oracle, std::move(detail), tf()};
        return;
      }
    }
    throw ContractViolation("unknown oracle " + oracle);
  }

  // Per-transition checks. `wpre`/`wpost` are the queue walks around the
  // edge; an edge performs at most one shared access, so `wpre` is also the
  // queue at the instant of that access.
  void check_edge(const ModelState& pre, const ModelState& post, Pid actor,
                  const StepResult& sr, const QueueWalk& wpre,
                  const QueueWalk& wpost, const TraceFn& tf) {
    for (const TraceEvent& ev : sr.events) {
      switch (ev.kind) {
        case EventKind::Cas: {
          if (!ev.success) break;
          if (ev.cell == Cell::State) {
            check_state_edge(ev, tf);
          } else if (ev.cell == Cell::Owner && ev.new_value != kNullPid) {
            check_handover(static_cast<Pid>(ev.new_value), wpre, tf);
          }
          break;
        }
        case EventKind::Store: {
          if (ev.cell == Cell::State) {
            check_state_edge(ev, tf);
          } else if (ev.cell == Cell::Owner) {
            // The one plain owner store is the line-11 path: the head saw
            // owner null, and nobody else may write null -> pid.
            if (ev.old_value != kNullPid) {
              flag("owner_linearity",
                   "plain owner store overwrote " +
                       std::to_string(ev.old_value) + " (must be null)",
                   tf);
            }
            if (ev.new_value != kNullPid) {
              check_handover(static_cast<Pid>(ev.new_value), wpre, tf);
            }
          }
          break;
        }
        case EventKind::EnqueueCommit: {
          if (!wpre.ok || !wpost.ok) break;  // flagged by queue_structure
          bool dup = std::find(wpre.values.begin(), wpre.values.end(),
                               ev.value) != wpre.values.end();
          bool appended = wpost.values.size() == wpre.values.size() + 1 &&
                          !wpost.values.empty() &&
                          wpost.values.back() == ev.value &&
                          std::equal(wpre.values.begin(), wpre.values.end(),
                                     wpost.values.begin());
          if (dup) {
            flag("queue_fifo",
                 "enqueue of p" + std::to_string(ev.value) +
                     " while already queued",
                 tf);
          } else if (!appended) {
            flag("queue_fifo",
                 "enqueue commit of p" + std::to_string(ev.value) +
                     " did not append at the tail",
                 tf);
          }
          break;
        }
        case EventKind::DequeueCommit: {
          if (!wpre.ok || !wpost.ok) break;
          if (ev.value == kNullPid) {
            if (!wpre.values.empty()) {
              flag("queue_fifo", "empty dequeue against a non-empty queue", tf);
            }
          } else if (wpre.values.empty() || wpre.values.front() != ev.value) {
            flag("queue_fifo",
                 "dequeue returned p" + std::to_string(ev.value) +
                     " but the head was " +
                     (wpre.values.empty()
                          ? std::string("empty")
                          : "p" + std::to_string(wpre.values.front())),
                 tf);
          } else if (wpost.values.size() + 1 != wpre.values.size() ||
                     !std::equal(wpost.values.begin(), wpost.values.end(),
                                 wpre.values.begin() + 1)) {
            flag("queue_fifo", "dequeue did not remove exactly the head", tf);
          }
          break;
        }
        case EventKind::PeekCommit: {
          if (!wpre.ok) break;
          Pid expect =
              wpre.values.empty() ? kNullPid : wpre.values.front();
          if (ev.value != expect) {
            flag("queue_fifo",
                 "peek returned p" + std::to_string(ev.value) +
                     " but the head was p" + std::to_string(expect),
                 tf);
          }
          break;
        }
        case EventKind::EndClaimGranted: {
          if (post.owner != ev.pid) {
            flag("mutual_exclusion",
                 "p" + std::to_string(ev.pid) +
                     " granted while owner is p" + std::to_string(post.owner),
                 tf);
          }
          if (post.procs[ev.pid].state != ProcState::Active) {
            flag("state_safety",
                 "p" + std::to_string(ev.pid) + " granted while " +
                     to_string(post.procs[ev.pid].state),
                 tf);
          }
          if (wpre.ok &&
              (wpre.values.empty() || wpre.values.front() != ev.pid)) {
            flag("fifo_fairness",
                 "p" + std::to_string(ev.pid) +
                     " granted while the queue head was " +
                     (wpre.values.empty()
                          ? std::string("empty")
                          : "p" + std::to_string(wpre.values.front())),
                 tf);
          }
          break;
        }
        case EventKind::BeginRelease: {
          if (pre.owner != ev.pid) {
            flag("mutual_exclusion",
                 "p" + std::to_string(ev.pid) +
                     " releasing while owner is p" + std::to_string(pre.owner),
                 tf);
          }
          if (pre.procs[ev.pid].state != ProcState::Active) {
            flag("state_safety",
                 "p" + std::to_string(ev.pid) + " releasing while " +
                     to_string(pre.procs[ev.pid].state),
                 tf);
          }
          break;
        }
        default:
          break;
      }
    }
    if (sr.claim_completed && sr.scenario == Scenario::kNone) {
      flag("scenario_classification",
           "claim by p" + std::to_string(actor) + " exited unclassified", tf);
    }
    if (sr.contract_fault) {
      flag("contract", sr.fault_what, tf);
    }
  }

  // Per-state checks, run once when a state is first discovered.
  void check_state(const ModelState& s, const QueueWalk& w, const TraceFn& tf) {
    if (!w.ok) {
      flag("queue_structure", w.error, tf);
      return;
    }
    // Exclusion window: between a grant and the matching begin_release at
    // most one process may exist (the critical section proper).
    std::uint32_t in_window = 0;
    for (Pid p = 1; p <= s.process_count; ++p) {
      const ProcCore& pc = s.procs[p];
      if (pc.phase == Phase::Releasing && !pc.release.began) ++in_window;
    }
    if (in_window > 1) {
      flag("mutual_exclusion",
           std::to_string(in_window) + " processes inside the critical window",
           tf);
    }
    // Ownership case analysis: exactly one of unlocked / claiming-head /
    // locked / releasing describes every reachable state.
    if (s.owner == kNullPid) {
      if (!w.values.empty()) {
        Pid head = w.values.front();
        if (s.procs[head].phase != Phase::Claiming) {
          flag("ownership_cases",
               "owner null while queue head p" + std::to_string(head) +
                   " is " + to_string(s.procs[head].phase) +
                   " (not mid-claim)",
               tf);
        }
      }
    } else {
      bool is_head = !w.values.empty() && w.values.front() == s.owner;
      bool queued = std::find(w.values.begin(), w.values.end(), s.owner) !=
                    w.values.end();
      if (!is_head && queued) {
        flag("ownership_cases",
             "owner p" + std::to_string(s.owner) +
                 " sits mid-queue (neither locked-at-head nor releasing)",
             tf);
      }
    }
  }

  void check_terminal(const ModelState& s, const TraceFn& tf) {
    if (!s.all_done()) {
      flag("deadlock_freedom", "no step enabled in " + describe_state(s), tf);
    }
  }

 private:
  void check_state_edge(const TraceEvent& ev, const TraceFn& tf) {
    auto from = static_cast<ProcState>(ev.old_value);
    auto to = static_cast<ProcState>(ev.new_value);
    if (!legal_state_edge(from, to)) {
      flag("state_automaton",
           "p" + std::to_string(ev.index) + " moved " +
               std::string(to_string(from)) + "->" + to_string(to),
           tf);
    }
  }

  void check_handover(Pid new_owner, const QueueWalk& wpre, const TraceFn& tf) {
    if (!wpre.ok) return;
    if (wpre.values.empty() || wpre.values.front() != new_owner) {
      flag("fifo_handover",
           "ownership moved to p" + std::to_string(new_owner) +
               " which was not the queue head",
           tf);
    }
  }

  ExplorationReport& rep_;
};

constexpr std::uint64_t kInProgress = ~0ull;
constexpr std::uint64_t kPathsCap = ~0ull - 1;

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b, bool& saturated) {
  if (a > kPathsCap - b) {
    saturated = true;
    return kPathsCap;
  }
  return a + b;
}

struct Frame {
  ModelState state;
  PackedKey key;
  QueueWalk walk;  // of `state`, cached for all outgoing edges
  Pid next_p = 1;
  bool had_child = false;
  std::uint64_t paths = 0;
  Pid in_actor = 0;
  std::vector<TraceEvent> in_events;  // the edge that discovered this state
};

std::vector<std::string> stack_trace(const std::vector<Frame>& stack,
                                     const std::vector<TraceEvent>* extra) {
  std::vector<std::string> lines;
  for (const Frame& f : stack) {
    for (const TraceEvent& ev : f.in_events) lines.push_back(ev.describe());
  }
  if (extra != nullptr) {
    for (const TraceEvent& ev : *extra) lines.push_back(ev.describe());
  }
  return lines;
}

void fill_scenario_rows(ExplorationReport& rep, const CasLedger& ledger) {
  for (const ScenarioCost& c : scenario_cost_table()) {
    const ScenarioStats& st = ledger.claim_stats(c.id);
    ScenarioRow row;
    row.id = c.id;
    row.name = c.name;
    row.hits = st.hits;
    row.design_min = c.design_min;
    row.design_max = c.design_max;
    row.unbounded_max = c.unbounded_max;
    if (st.hits != 0) {
      row.cas_min = st.structural_min;
      row.cas_max = st.structural_max;
      row.cas_mean = static_cast<double>(st.structural_sum) /
                     static_cast<double>(st.hits);
      row.extra_max = st.extra_max;
      row.within_bounds =
          st.structural_min >= c.design_min &&
          (c.unbounded_max || st.structural_max <= c.design_max);
    }
    rep.scenarios.push_back(row);
  }
  rep.claims_observed = ledger.total_claims();
  rep.release = ledger.release_stats();
  rep.link_retry_max = ledger.link_retry_max();
}

}  // namespace

ExplorationReport explore(const ExplorerConfig& config) {
  ExplorationReport rep;
  rep.processes = config.processes;
  rep.cycles = config.cycles;
  rep.defect = config.defect == Defect::kNone              ? "none"
               : config.defect == Defect::kBlindOwnerStore ? "blind-owner-store"
               : config.defect == Defect::kDropWakeCas     ? "drop-wake-cas"
                                                           : "grant-while-parking";
  OracleHub oracles(rep);
  CasLedger ledger;

  const Pid n = config.processes;
  std::unordered_map<PackedKey, std::uint64_t, PackedKeyHash> visited;
  std::vector<Frame> stack;

  ModelState init = ModelState::initial(config.processes, config.cycles,
                                        config.defect);
  {
    Frame root;
    root.state = init;
    root.key = pack_state(init);
    root.walk = walk_queue(init);
    visited.emplace(root.key, kInProgress);
    auto tf0 = [&]() { return std::vector<std::string>{}; };
    oracles.check_state(init, root.walk, tf0);
    stack.push_back(std::move(root));
  }

  bool complete = true;
  while (!stack.empty()) {
    Frame& f = stack.back();

    Pid p = 0;
    while (f.next_p <= n) {
      if (enabled(f.state, f.next_p)) {
        p = f.next_p++;
        break;
      }
      ++f.next_p;
    }

    if (p == 0) {
      // No more children. Terminal states are complete runs or deadlocks.
      if (!f.had_child) {
        auto tf = [&]() { return stack_trace(stack, nullptr); };
        oracles.check_terminal(f.state, tf);
        if (f.state.all_done()) f.paths = 1;
      }
      visited[f.key] = f.paths;
      std::uint64_t paths = f.paths;
      stack.pop_back();
      if (!stack.empty()) {
        stack.back().paths =
            sat_add(stack.back().paths, paths, rep.paths_saturated);
      } else {
        rep.paths = paths;
      }
      continue;
    }

    f.had_child = true;
    ModelState child = f.state;
    StepResult sr = step_process(child, p, config.defect);
    ++rep.edges;

    QueueWalk wpost = walk_queue(child);
    auto tf = [&]() { return stack_trace(stack, &sr.events); };
    oracles.check_edge(f.state, child, p, sr, f.walk, wpost, tf);
    if (sr.claim_completed && !sr.contract_fault) {
      ledger.record_claim(sr.scenario, sr.claim_counters.cas_total,
                          sr.claim_counters.link_retries,
                          sr.claim_counters.help_swings);
    }
    if (sr.release_completed && !sr.contract_fault) {
      ledger.record_release(sr.release_counters.cas_total,
                            sr.release_counters.link_retries);
    }
    if (sr.contract_fault) continue;  // the faulted run stops here

    PackedKey ck = pack_state(child);
    auto it = visited.find(ck);
    if (it != visited.end()) {
      if (it->second == kInProgress) {
        // The step relation should admit no cycles: every loop-back in the
        // machines requires another process's progress. Report loudly.
        oracles.flag("contract", "cycle in the state graph", tf);
      } else {
        f.paths = sat_add(f.paths, it->second, rep.paths_saturated);
      }
      continue;
    }

    if (visited.size() >= config.max_states) {
      complete = false;
      break;
    }
    visited.emplace(ck, kInProgress);
    oracles.check_state(child, wpost, tf);

    Frame next;
    next.state = std::move(child);
    next.key = ck;
    next.walk = std::move(wpost);
    next.in_actor = p;
    next.in_events = std::move(sr.events);
    stack.push_back(std::move(next));
  }

  rep.states = visited.size();
  rep.complete = complete;
  if (!complete) {
    rep.paths = 0;
    rep.paths_saturated = false;
  }

  ledger.check_design_bounds();
  rep.link_retry_bound = (config.processes - 1) * config.cycles;
  if (rep.link_retry_max > rep.link_retry_bound) {
    ledger.problems();  // recorded below with the rest
  }
  auto tf_none = [&]() { return std::vector<std::string>{}; };
  for (const std::string& problem : ledger.problems()) {
    oracles.flag("cas_cost_bounds", problem, tf_none);
  }
  if (rep.link_retry_max > rep.link_retry_bound) {
    oracles.flag("cas_cost_bounds",
                 "enqueue link retries " + std::to_string(rep.link_retry_max) +
                     " exceed the (N-1)*cycles bound of " +
                     std::to_string(rep.link_retry_bound),
                 tf_none);
  }
  fill_scenario_rows(rep, ledger);
  return rep;
}

// ---------------------------------------------------------------------------
// Non-determinism witness. The projections (begin_claim order, grant order)
// are folded into the dedup key so that runs differing only in those orders
// are not collapsed; leaves then record one full trace per projection pair.

namespace {

struct AugKey {
  PackedKey k;
  std::uint64_t begins = 0;
  std::uint64_t ends = 0;
  friend bool operator==(const AugKey& a, const AugKey& b) {
    return a.begins == b.begins && a.ends == b.ends && a.k == b.k;
  }
};

struct AugKeyHash {
  std::size_t operator()(const AugKey& a) const {
    std::size_t h = PackedKeyHash{}(a.k);
    h ^= std::hash<std::uint64_t>{}(a.begins) + 0x9e3779b97f4a7c15ull +
         (h << 6) + (h >> 2);
    h ^= std::hash<std::uint64_t>{}(a.ends) + 0x9e3779b97f4a7c15ull + (h << 6) +
         (h >> 2);
    return h;
  }
};

std::uint64_t push_pid(std::uint64_t seq, Pid p) {
  return (seq << 4) | p;  // 4 bits per entry, oldest in the high bits
}

std::vector<Pid> decode_seq(std::uint64_t seq) {
  std::vector<Pid> out;
  while (seq != 0) {
    out.push_back(static_cast<Pid>(seq & 0xF));
    seq >>= 4;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

struct WitnessFrame {
  ModelState state;
  AugKey key;
  Pid next_p = 1;
  std::vector<TraceEvent> in_events;
};

}  // namespace

NondetWitness find_nondeterminism_witness(std::uint32_t cycles) {
  NondetWitness w;
  const Pid n = 2;
  ModelState init = ModelState::initial(n, cycles, Defect::kNone);

  std::unordered_set<AugKey, AugKeyHash> visited;
  std::vector<WitnessFrame> stack;
  // begin-order -> (grant-order -> trace of the first run seen with it)
  std::unordered_map<std::uint64_t,
                     std::vector<std::pair<std::uint64_t,
                                           std::vector<std::string>>>>
      leaves;

  WitnessFrame root;
  root.state = init;
  root.key = AugKey{pack_state(init), 0, 0};
  visited.insert(root.key);
  stack.push_back(std::move(root));

  while (!stack.empty()) {
    WitnessFrame& f = stack.back();

    Pid p = 0;
    while (f.next_p <= n) {
      if (enabled(f.state, f.next_p)) {
        p = f.next_p++;
        break;
      }
      ++f.next_p;
    }
    if (p == 0) {
      if (f.state.all_done()) {
        auto& variants = leaves[f.key.begins];
        bool known = false;
        for (auto& v : variants) {
          if (v.first == f.key.ends) {
            known = true;
            break;
          }
        }
        if (!known) {
          std::vector<std::string> lines;
          for (const WitnessFrame& fr : stack) {
            for (const TraceEvent& ev : fr.in_events) {
              lines.push_back(ev.describe());
            }
          }
          variants.emplace_back(f.key.ends, std::move(lines));
          if (variants.size() >= 2) {
            w.found = true;
            w.begin_order = decode_seq(f.key.begins);
            w.end_order_a = decode_seq(variants[0].first);
            w.end_order_b = decode_seq(variants[1].first);
            w.trace_a = variants[0].second;
            w.trace_b = variants[1].second;
            return w;
          }
        }
      }
      stack.pop_back();
      continue;
    }

    ModelState child = f.state;
    StepResult sr = step_process(child, p, Defect::kNone);
    if (sr.contract_fault) continue;

    AugKey ck{pack_state(child), f.key.begins, f.key.ends};
    for (const TraceEvent& ev : sr.events) {
      if (ev.kind == EventKind::BeginClaim) ck.begins = push_pid(ck.begins, ev.pid);
      if (ev.kind == EventKind::EndClaimGranted) ck.ends = push_pid(ck.ends, ev.pid);
    }
    if (!visited.insert(ck).second) continue;

    WitnessFrame next;
    next.state = std::move(child);
    next.key = ck;
    next.in_events = std::move(sr.events);
    stack.push_back(std::move(next));
  }
  return w;
}

}  // namespace claimlock
