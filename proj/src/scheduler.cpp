#include "claimlock/scheduler.hpp"

#include <chrono>
#include <random>
#include <thread>

#include "claimlock/native_state.hpp"

namespace claimlock {
namespace {

// Diagnostic status values for the stall dump. Best-effort: a pid that was
// signalled while its parking dispatch unwound can be re-dispatched before
// the old worker records kParkedStatus, so only kDoneStatus is authoritative.
constexpr std::uint8_t kSpawnedStatus = 0;
constexpr std::uint8_t kReadyStatus = 1;
constexpr std::uint8_t kParkedStatus = 2;
constexpr std::uint8_t kDoneStatus = 3;

const char* status_text(std::uint8_t s) {
  switch (s) {
    case kReadyStatus:
      return "ready";
    case kParkedStatus:
      return "parked";
    case kDoneStatus:
      return "done";
    default:
      return "spawned";
  }
}

}  // namespace

CoopRuntime::CoopRuntime(std::uint32_t runners, std::uint32_t stall_timeout_ms)
    : runners_(runners), stall_timeout_ms_(stall_timeout_ms) {
  if (runners_ == 0) {
    throw ContractViolation("runtime needs at least one runner");
  }
}

Pid CoopRuntime::spawn(Body body) {
  if (started_) {
    throw ContractViolation("spawn after run_to_completion started");
  }
  bodies_.push_back(std::move(body));
  status_.emplace_back(kReadyStatus);
  live_.fetch_add(1);
  auto pid = static_cast<Pid>(bodies_.size());
  std::lock_guard<std::mutex> lk(mu_);
  ready_.push_back(pid);
  return pid;
}

std::uint32_t CoopRuntime::process_count() const {
  return static_cast<std::uint32_t>(bodies_.size());
}

std::string CoopRuntime::first_fault() const {
  std::lock_guard<std::mutex> lk(fault_mu_);
  return first_fault_;
}

void CoopRuntime::run_to_completion() {
  started_ = true;
  if (bodies_.empty()) return;

  std::vector<std::thread> workers;
  workers.reserve(runners_);
  for (std::uint32_t i = 0; i < runners_; ++i) {
    workers.emplace_back([this] { worker_loop(); });
  }
  watch_progress();
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers) w.join();
}

void CoopRuntime::on_schedule(Pid target) { enqueue_ready(target); }

void CoopRuntime::enqueue_ready(Pid p) {
  status_[p - 1].store(kReadyStatus, std::memory_order_relaxed);
  {
    std::lock_guard<std::mutex> lk(mu_);
    ready_.push_back(p);
  }
  cv_.notify_one();
}

void CoopRuntime::worker_loop() {
  for (;;) {
    Pid p = kNullPid;
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [this] { return stop_ || !ready_.empty(); });
      if (stop_) return;
      p = ready_.front();
      ready_.pop_front();
    }
    dispatches_.fetch_add(1, std::memory_order_relaxed);
    StepOutcome out;
    try {
      out = bodies_[p - 1](p);
    } catch (const ContractViolation& e) {
      record_fault(e.what());
      continue;
    }
    switch (out) {
      case StepOutcome::kYield:
        enqueue_ready(p);
        break;
      case StepOutcome::kParked:
        status_[p - 1].store(kParkedStatus, std::memory_order_relaxed);
        break;
      case StepOutcome::kDone:
        status_[p - 1].store(kDoneStatus, std::memory_order_relaxed);
        if (live_.fetch_sub(1) == 1) done_cv_.notify_all();
        break;
    }
  }
}

void CoopRuntime::record_fault(const std::string& what) {
  if (faults_.fetch_add(1) == 0) {
    std::lock_guard<std::mutex> lk(fault_mu_);
    first_fault_ = what;
  }
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  done_cv_.notify_all();
}

// Blocks until every body finished, a fault stopped the run, or no body was
// dispatched for stall_timeout_ms_ while work remained (a wake signal that
// never arrives looks exactly like this).
void CoopRuntime::watch_progress() {
  std::unique_lock<std::mutex> lk(done_mu_);
  std::uint64_t last = dispatches_.load();
  auto last_change = std::chrono::steady_clock::now();
  for (;;) {
    done_cv_.wait_for(lk, std::chrono::milliseconds(200));
    if (live_.load() == 0 || faults_.load() != 0) return;
    std::uint64_t now_val = dispatches_.load();
    auto now = std::chrono::steady_clock::now();
    if (now_val != last) {
      last = now_val;
      last_change = now;
    } else if (now - last_change >
               std::chrono::milliseconds(stall_timeout_ms_)) {
      stalled_.store(true);
      record_fault("stall: no dispatch for " +
                   std::to_string(stall_timeout_ms_) + "ms; " + dump_state());
      return;
    }
  }
}

std::string CoopRuntime::dump_state() {
  std::size_t queued;
  {
    std::lock_guard<std::mutex> lk(mu_);
    queued = ready_.size();
  }
  std::string dump = "run queue holds " + std::to_string(queued) + ", pids:";
  for (std::size_t i = 0; i < status_.size(); ++i) {
    dump += " " + std::to_string(i + 1) + "=" +
            status_text(status_[i].load(std::memory_order_relaxed));
  }
  return dump;
}

namespace {

// One soak-test task, resumable at the points where a claim can park.
// `resume` is published before the park CAS inside claim() can succeed, so a
// schedule signal that requeues the task mid-call always finds a coherent
// continuation.
struct TaskState {
  enum class Resume : std::uint8_t { kStart, kClaim, kAfterPark, kCritical };
  Resume resume = Resume::kStart;
  std::uint32_t warmup_yields = 0;
  std::uint32_t done_iterations = 0;
};

}  // namespace

StressResult run_stress(const StressConfig& config) {
  if (config.processes == 0 || config.runners == 0) {
    throw ContractViolation("stress needs at least one process and one runner");
  }

  NativeState mem(config.processes);
  std::vector<TaskState> tasks(config.processes + 1);
  std::mt19937_64 rng(config.seed);
  for (Pid p = 1; p <= config.processes; ++p) {
    tasks[p].warmup_yields = static_cast<std::uint32_t>(rng() % 4);
  }

  std::uint64_t counter = 0;  // plain variable: the claim lock is its only guard
  std::atomic<std::uint64_t> claims_granted{0};
  std::atomic<std::uint64_t> claims_parked{0};
  std::atomic<std::uint64_t> releases{0};
  std::array<std::atomic<std::uint64_t>, kScenarioCount + 1> scenario_hits{};

  CoopRuntime rt(config.runners, config.stall_timeout_ms);
  auto& hooks = rt.hooks();

  auto body = [&](Pid pid) -> StepOutcome {
    TaskState& t = tasks[pid];
    for (;;) {
      switch (t.resume) {
        case TaskState::Resume::kStart: {
          if (t.warmup_yields > 0) {
            --t.warmup_yields;
            return StepOutcome::kYield;
          }
          t.resume = TaskState::Resume::kClaim;
          break;
        }
        case TaskState::Resume::kClaim: {
          OpCtx ctx;
          ctx.hooks = &hooks;
          Scenario sc = Scenario::kNone;
          t.resume = TaskState::Resume::kAfterPark;
          bool granted = claim(mem, pid, hooks, ctx, &sc);
          auto idx = static_cast<std::size_t>(sc);
          if (idx < scenario_hits.size()) {
            scenario_hits[idx].fetch_add(1, std::memory_order_relaxed);
          }
          if (!granted) {
            claims_parked.fetch_add(1, std::memory_order_relaxed);
            return StepOutcome::kParked;
          }
          claims_granted.fetch_add(1, std::memory_order_relaxed);
          t.resume = TaskState::Resume::kCritical;
          break;
        }
        case TaskState::Resume::kAfterPark: {
          OpCtx ctx;
          finish_parked_claim(mem, pid, ctx);
          claims_granted.fetch_add(1, std::memory_order_relaxed);
          t.resume = TaskState::Resume::kCritical;
          break;
        }
        case TaskState::Resume::kCritical: {
          counter += 1;
          // Hand the core away while holding the lock every few rounds so
          // other workers pile up behind the claim even on one CPU.
          if ((t.done_iterations & 63u) == 0) std::this_thread::yield();
          OpCtx ctx;
          release(mem, pid, hooks, ctx);
          releases.fetch_add(1, std::memory_order_relaxed);
          t.done_iterations += 1;
          if (t.done_iterations >= config.iterations) {
            return StepOutcome::kDone;
          }
          t.resume = TaskState::Resume::kClaim;
          break;
        }
      }
    }
  };

  auto t0 = std::chrono::steady_clock::now();
  for (std::uint32_t i = 0; i < config.processes; ++i) rt.spawn(body);
  rt.run_to_completion();

  StressResult res;
  res.counter_expected =
      static_cast<std::uint64_t>(config.processes) * config.iterations;
  res.counter_observed = counter;
  res.claims_granted = claims_granted.load();
  res.claims_parked = claims_parked.load();
  res.releases = releases.load();
  for (std::size_t i = 0; i < res.scenario_hits.size(); ++i) {
    res.scenario_hits[i] = scenario_hits[i].load();
  }
  res.contract_faults = rt.faults();
  res.first_fault = rt.first_fault();
  res.stalled = rt.stalled();
  res.elapsed_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return res;
}

}  // namespace claimlock
