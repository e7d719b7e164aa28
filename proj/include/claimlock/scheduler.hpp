#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "claimlock/protocol.hpp"

namespace claimlock {

// What one dispatch of a process body reports back to its worker.
enum class StepOutcome : std::uint8_t {
  kDone,    // the process terminated; never dispatched again
  kParked,  // a claim denied it; only a schedule signal re-queues it
  kYield,   // cooperative yield; goes back to the tail of the run queue
};

// A minimal cooperative runtime: a run queue of ready pids and k worker
// threads that loop dequeue -> run -> (yield | park | done). Bodies are
// resumable callables dispatched with their pid; cross-worker communication
// happens through the run queue and whatever shared memory the bodies use.
// The run queue itself is plain mutex+condvar scaffolding - it hosts the
// lock under test, it is not the lock under test.
//
// Parking discipline: a body must have published its resume point before
// calling into a claim, because the releaser's signal can land - and another
// worker can re-dispatch the body - before the parking call even returns.
// After the park CAS the original worker only unwinds; it never touches the
// body's state again, so each dispatch has exclusive use of it.
class CoopRuntime : RuntimeHooks {
 public:
  using Body = std::function<StepOutcome(Pid)>;

  explicit CoopRuntime(std::uint32_t runners,
                       std::uint32_t stall_timeout_ms = 15'000);

  // Registers a body and marks it ready; pids are dense from 1 in spawn
  // order. Only valid before run_to_completion.
  Pid spawn(Body body);

  // Runs every spawned body to completion over the worker pool. Returns
  // immediately with nothing spawned. A stall (no dispatch for the
  // configured timeout while work remains) or a contract fault stops the run
  // and is reported through faults()/first_fault() with a state dump.
  void run_to_completion();

  // The adapter claim/release need: on_schedule re-queues a parked pid.
  RuntimeHooks& hooks() { return *this; }

  std::uint32_t process_count() const;
  std::uint64_t dispatches() const { return dispatches_.load(); }
  std::uint64_t faults() const { return faults_.load(); }
  std::string first_fault() const;
  bool stalled() const { return stalled_.load(); }

 private:
  void on_wait(Pid) override {}  // parking is the worker returning to the pool
  void on_schedule(Pid target) override;

  void worker_loop();
  void enqueue_ready(Pid p);
  void record_fault(const std::string& what);
  void watch_progress();
  std::string dump_state();

  const std::uint32_t runners_;
  const std::uint32_t stall_timeout_ms_;
  bool started_ = false;

  std::vector<Body> bodies_;  // index pid-1
  std::deque<std::atomic<std::uint8_t>> status_;  // per-pid, for the stall dump

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Pid> ready_;
  bool stop_ = false;

  std::mutex done_mu_;
  std::condition_variable done_cv_;
  std::atomic<std::uint32_t> live_{0};

  std::atomic<std::uint64_t> dispatches_{0};
  std::atomic<std::uint64_t> faults_{0};
  std::atomic<bool> stalled_{false};
  mutable std::mutex fault_mu_;
  std::string first_fault_;
};

// Soak test: `processes` tasks, each doing `iterations` rounds of
// claim / increment a lock-guarded counter / release, multiplexed over
// `runners` workers. The seed staggers task start-ups to vary the schedule.
struct StressConfig {
  std::uint32_t processes = 8;
  std::uint32_t iterations = 10'000;
  std::uint32_t runners = 4;
  std::uint64_t seed = 0;
  std::uint32_t stall_timeout_ms = 15'000;
};

struct StressResult {
  std::uint64_t counter_expected = 0;
  std::uint64_t counter_observed = 0;
  std::uint64_t claims_granted = 0;
  std::uint64_t claims_parked = 0;
  std::uint64_t releases = 0;
  std::array<std::uint64_t, kScenarioCount + 1> scenario_hits{};  // by id
  std::uint64_t contract_faults = 0;
  std::string first_fault;
  bool stalled = false;
  double elapsed_ms = 0.0;

  bool ok() const {
    return counter_observed == counter_expected && contract_faults == 0 &&
           !stalled;
  }
};

StressResult run_stress(const StressConfig& config);

}  // namespace claimlock
