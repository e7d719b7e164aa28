#pragma once

#include <cstdint>

#include "claimlock/queue_machines.hpp"
#include "claimlock/types.hpp"

// The claim/release protocol, written as step machines over the same memory
// abstraction as the queue. claim() is enqueue-first: the caller joins the
// wait queue before looking at the owner field, and only the queue head ever
// takes ownership, which is where FIFO fairness comes from. A claim that
// cannot complete parks the caller (returns false after flipping its state
// to WAITING) instead of spinning; the releaser hands ownership to the next
// head and signals it with at most two state CASes.
//
// Ownership resolution in claim, in the order tried (the branch taken also
// classifies the claim for cost reporting, see Scenario):
//
//   head != us            park, unless a release signalled us first
//   owner CAS null->us    the uncontended fast path
//   owner re-read null    a releaser finished and found the queue empty
//                         before our enqueue landed; plain store is safe
//                         because only the head writes null->pid
//   owner == us           a releaser already handed over; park only if its
//                         signal hasn't arrived (WAITING CAS still succeeds)
//   owner CAS steal       take ownership from the releaser before it hands
//                         over
//   owner CAS null->us    the releaser beat the steal and went to null
//   park / proceed        the handover landed after all; a failed WAITING
//                         CAS means the schedule signal already arrived

namespace claimlock {

// Branch classification of one completed claim. Ids are stable and the
// cost table in instrumentation.hpp is indexed by them.
enum class Scenario : std::uint8_t {
  kNone = 0,
  kUnclaimed = 1,            // head == us, owner CAS null->us succeeded
  kClaimed = 2,              // head != us, parked
  kReleasedInTime = 3,       // head != us, signal won the park race
  kOwnerNull = 4,            // owner CAS failed but re-read null, plain store
  kTransferUnscheduled = 5,  // owner already us, no signal yet, parked
  kTransferScheduled = 6,    // owner already us, signal arrived in-band
  kOwnershipStolen = 7,      // CASed ownership away from the releaser
  kReleasedOwnerNull = 8,    // steal lost, owner re-null, CAS null->us won
  kReleasedUnscheduled = 9,  // handover landed, no signal yet, parked
  kReleasedScheduled = 10,   // handover landed, signal arrived in-band
};

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::kNone: return "none";
    case Scenario::kUnclaimed: return "unclaimed";
    case Scenario::kClaimed: return "claimed";
    case Scenario::kReleasedInTime: return "released_in_time";
    case Scenario::kOwnerNull: return "owner_null";
    case Scenario::kTransferUnscheduled: return "transfer_unscheduled";
    case Scenario::kTransferScheduled: return "transfer_scheduled";
    case Scenario::kOwnershipStolen: return "ownership_stolen";
    case Scenario::kReleasedOwnerNull: return "released_owner_null";
    case Scenario::kReleasedUnscheduled: return "released_unscheduled";
    case Scenario::kReleasedScheduled: return "released_scheduled";
  }
  return "?";
}

inline constexpr std::uint32_t kScenarioCount = 10;

// Deliberate bugs for validating that the oracles actually catch anything.
// Never enabled outside the mutation tests.
enum class Defect : std::uint8_t {
  kNone = 0,
  kBlindOwnerStore,    // fast-path owner CAS replaced by an unconditional store
  kDropWakeCas,        // schedule() omits the WAITING->SCHEDULED attempt
  kGrantWhileParking,  // claim reports success after parking itself
};

namespace detail {

template <class Mem>
inline ProcState state_exchange(Mem& mem, OpCtx& ctx, Pid target, ProcState v) {
  ProcState old = mem.state_store(target, v);
  if (ctx.sink != nullptr) {
    TraceEvent ev;
    ev.kind = EventKind::Store;
    ev.pid = ctx.pid;
    ev.cell = Cell::State;
    ev.index = target;
    ev.old_value = static_cast<std::uint64_t>(old);
    ev.new_value = static_cast<std::uint64_t>(v);
    ctx.sink->on_event(ev);
  }
  return old;
}

inline void emit_plain(OpCtx& ctx, EventKind kind) {
  if (ctx.sink != nullptr) {
    TraceEvent ev;
    ev.kind = kind;
    ev.pid = ctx.pid;
    ctx.sink->on_event(ev);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Two-attempt schedule signal: ENGAGING->SCHEDULED first (the target is still
// inside claim and will notice in-band), then WAITING->SCHEDULED (the target
// parked; only this one re-enqueues it, via hooks). Both failing means the
// claimant already resolved ownership itself.
struct ScheduleMachine {
  enum Pc : std::uint8_t { kEngagingCas, kWaitingCas, kDone };

  Pid target = kNullPid;
  std::uint8_t pc = kEngagingCas;
  Defect defect = Defect::kNone;

  bool done() const { return pc == kDone; }

  template <class Mem>
  StepStatus step(Mem& mem, OpCtx& ctx) {
    switch (pc) {
      case kEngagingCas: {
        auto r = mem.state_cas(target, ProcState::Engaging, ProcState::Scheduled);
        ctx.emit_cas(Cell::State, target, static_cast<std::uint64_t>(ProcState::Engaging),
                     static_cast<std::uint64_t>(ProcState::Scheduled), r.ok);
        if (r.ok) {
          emit_signal(ctx, /*woke=*/false);
          pc = kDone;
          return StepStatus::Done;
        }
        if (defect == Defect::kDropWakeCas) {  // injected lost-wakeup bug
          pc = kDone;
          return StepStatus::Done;
        }
        pc = kWaitingCas;
        return StepStatus::Running;
      }
      case kWaitingCas: {
        auto r = mem.state_cas(target, ProcState::Waiting, ProcState::Scheduled);
        ctx.emit_cas(Cell::State, target, static_cast<std::uint64_t>(ProcState::Waiting),
                     static_cast<std::uint64_t>(ProcState::Scheduled), r.ok);
        if (r.ok) {
          emit_signal(ctx, /*woke=*/true);
          if (ctx.hooks != nullptr) ctx.hooks->on_schedule(target);
        }
        pc = kDone;
        return StepStatus::Done;
      }
      default:
        throw ContractViolation("schedule stepped after completion");
    }
  }

 private:
  void emit_signal(OpCtx& ctx, bool woke) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::ScheduleSignal;
      ev.pid = ctx.pid;
      ev.value = target;
      ev.success = woke;
      ctx.sink->on_event(ev);
    }
  }
};

// ---------------------------------------------------------------------------
struct ClaimMachine {
  enum Pc : std::uint8_t {
    kSetEngaging,
    kEnqueue,
    kPeek,
    kOwnerCasNull,    // the fast path, tried when we are the head
    kReadOwner,       // fast path failed: a release is (or was) in flight
    kOwnerPlainStore, // re-read null: only the head stores null->pid
    kParkCasTransfer, // owner already us: park unless the signal landed
    kStealCas,        // owner is the releaser: take ownership directly
    kOwnerCasNull2,   // releaser went to null after our copy
    kParkCasLate,     // handover landed: park unless the signal landed
    kParkCasOuter,    // not the head: park unless a release signalled us
    kGrantActive,     // common exit: state back to ACTIVE, report success
    kDone,
  };

  Pid pid = kNullPid;
  std::uint8_t pc = kSetEngaging;
  Defect defect = Defect::kNone;

  EnqueueMachine enq;
  PeekMachine peek;
  Pid local_owner = kNullPid;

  bool granted_ = false;
  Scenario scenario = Scenario::kNone;
  std::uint8_t grant_scenario = 0;  // pending Scenario while in kGrantActive

  bool done() const { return pc == kDone; }
  bool granted() const { return granted_; }

  template <class Mem>
  StepStatus step(Mem& mem, OpCtx& ctx) {
    switch (pc) {
      case kSetEngaging: {
        detail::emit_plain(ctx, EventKind::BeginClaim);
        ProcState old = detail::state_exchange(mem, ctx, pid, ProcState::Engaging);
        if (old != ProcState::Active) {
          throw ContractViolation("claim by p" + std::to_string(pid) +
                                  " while " + to_string(old));
        }
        pc = kEnqueue;
        return StepStatus::Running;
      }
      case kEnqueue: {
        if (enq.step(mem, ctx) == StepStatus::Done) {
          enq = EnqueueMachine{};  // done with it; keep the state canonical
          pc = kPeek;
        }
        return StepStatus::Running;
      }
      case kPeek: {
        if (peek.step(mem, ctx) == StepStatus::Done) {
          // Branching is local: we already paid the peek's loads.
          pc = peek.result == pid ? kOwnerCasNull : kParkCasOuter;
          peek = PeekMachine{};
        }
        return StepStatus::Running;
      }
      case kOwnerCasNull: {
        if (defect == Defect::kBlindOwnerStore) {
          // Injected bug: take ownership without checking for null.
          Pid old = mem.owner_store(pid);
          emit_owner_store(ctx, old);
          return grant(Scenario::kUnclaimed);
        }
        auto r = mem.owner_cas(kNullPid, pid);
        ctx.emit_cas(Cell::Owner, 0, kNullPid, pid, r.ok);
        if (r.ok) return grant(Scenario::kUnclaimed);
        pc = kReadOwner;
        return StepStatus::Running;
      }
      case kReadOwner: {
        local_owner = mem.owner_load();
        emit_owner_load(ctx, local_owner);
        if (local_owner == kNullPid) {
          pc = kOwnerPlainStore;
        } else if (local_owner == pid) {
          pc = kParkCasTransfer;
          local_owner = kNullPid;  // the pc now encodes what we read
        } else {
          pc = kStealCas;  // keeps local_owner: it is the CAS expectation
        }
        return StepStatus::Running;
      }
      case kOwnerPlainStore: {
        // We are the head and saw no owner; nobody else may write null->pid,
        // so a plain store suffices (the explorer checks the overwritten
        // value really was null on every reachable interleaving).
        Pid old = mem.owner_store(pid);
        emit_owner_store(ctx, old);
        return grant(Scenario::kOwnerNull);
      }
      case kParkCasTransfer: {
        // Single owner test with nested CAS: the CAS outcome distinguishes
        // the unscheduled (park) and scheduled (proceed) transfer cases.
        auto r = mem.state_cas(pid, ProcState::Engaging, ProcState::Waiting);
        emit_state_cas(ctx, r.ok);
        if (r.ok) {
          if (defect == Defect::kGrantWhileParking) {
            // Injected bug: report success even though we just parked.
            scenario = Scenario::kTransferUnscheduled;
            granted_ = true;
            detail::emit_plain(ctx, EventKind::EndClaimGranted);
            pc = kDone;
            return StepStatus::Done;
          }
          return park(Scenario::kTransferUnscheduled, ctx);
        }
        return grant(Scenario::kTransferScheduled);
      }
      case kStealCas: {
        Pid victim = local_owner;
        local_owner = kNullPid;
        auto r = mem.owner_cas(victim, pid);
        ctx.emit_cas(Cell::Owner, 0, victim, pid, r.ok);
        if (r.ok) return grant(Scenario::kOwnershipStolen);
        pc = kOwnerCasNull2;
        return StepStatus::Running;
      }
      case kOwnerCasNull2: {
        auto r = mem.owner_cas(kNullPid, pid);
        ctx.emit_cas(Cell::Owner, 0, kNullPid, pid, r.ok);
        if (r.ok) return grant(Scenario::kReleasedOwnerNull);
        pc = kParkCasLate;
        return StepStatus::Running;
      }
      case kParkCasLate: {
        auto r = mem.state_cas(pid, ProcState::Engaging, ProcState::Waiting);
        emit_state_cas(ctx, r.ok);
        if (r.ok) return park(Scenario::kReleasedUnscheduled, ctx);
        return grant(Scenario::kReleasedScheduled);
      }
      case kParkCasOuter: {
        auto r = mem.state_cas(pid, ProcState::Engaging, ProcState::Waiting);
        emit_state_cas(ctx, r.ok);
        if (r.ok) return park(Scenario::kClaimed, ctx);
        return grant(Scenario::kReleasedInTime);
      }
      case kGrantActive: {
        detail::state_exchange(mem, ctx, pid, ProcState::Active);
        scenario = static_cast<Scenario>(grant_scenario);
        grant_scenario = 0;
        granted_ = true;
        detail::emit_plain(ctx, EventKind::EndClaimGranted);
        pc = kDone;
        return StepStatus::Done;
      }
      default:
        throw ContractViolation("claim stepped after completion");
    }
  }

 private:
  // The grant paths share their ACTIVE store; the scenario is decided at the
  // branch, the store is the next (and final) step.
  StepStatus grant(Scenario s) {
    grant_scenario = static_cast<std::uint8_t>(s);
    pc = kGrantActive;
    return StepStatus::Running;
  }

  StepStatus park(Scenario s, OpCtx& ctx) {
    scenario = s;
    granted_ = false;
    detail::emit_plain(ctx, EventKind::EndClaimDenied);
    if (ctx.hooks != nullptr) ctx.hooks->on_wait(pid);
    pc = kDone;
    return StepStatus::Done;
  }

  void emit_state_cas(OpCtx& ctx, bool ok) {
    ctx.emit_cas(Cell::State, pid, static_cast<std::uint64_t>(ProcState::Engaging),
                 static_cast<std::uint64_t>(ProcState::Waiting), ok);
  }
  void emit_owner_load(OpCtx& ctx, Pid v) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Load;
      ev.pid = ctx.pid;
      ev.cell = Cell::Owner;
      ev.old_value = v;
      ctx.sink->on_event(ev);
    }
  }
  void emit_owner_store(OpCtx& ctx, Pid old) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Store;
      ev.pid = ctx.pid;
      ev.cell = Cell::Owner;
      ev.old_value = old;
      ev.new_value = pid;
      ctx.sink->on_event(ev);
    }
  }
};

// ---------------------------------------------------------------------------
// Release: dequeue self, peek the next head; no waiter -> owner back to null
// (a failed CAS means a claimant resolved ownership already, which is fine);
// waiter h -> hand over with CAS pid->h and, only on success, signal h.
// Loop-free apart from the (protocol-unreachable) dequeue retry, hence
// wait-free in protocol use.
struct ReleaseMachine {
  enum Pc : std::uint8_t {
    kDequeue,
    kPeek,
    kOwnerToNull,
    kOwnerToHead,
    kSchedule,
    kDone,
  };

  Pid pid = kNullPid;
  std::uint8_t pc = kDequeue;
  Defect defect = Defect::kNone;
  bool began = false;

  DequeueMachine deq;
  PeekMachine peek;
  ScheduleMachine sched;
  Pid head_seen = kNullPid;

  bool done() const { return pc == kDone; }

  template <class Mem>
  StepStatus step(Mem& mem, OpCtx& ctx) {
    switch (pc) {
      case kDequeue: {
        if (!began) {
          detail::emit_plain(ctx, EventKind::BeginRelease);
          began = true;
        }
        if (deq.step(mem, ctx) == StepStatus::Done) {
          Pid got = deq.result;
          deq = DequeueMachine{};
          if (got != pid) {
            // Only the owner releases, and the owner is the queue head.
            throw ContractViolation("release by p" + std::to_string(pid) +
                                    " dequeued " + std::to_string(got));
          }
          pc = kPeek;
        }
        return StepStatus::Running;
      }
      case kPeek: {
        if (peek.step(mem, ctx) == StepStatus::Done) {
          head_seen = peek.result;
          peek = PeekMachine{};
          pc = head_seen == kNullPid ? kOwnerToNull : kOwnerToHead;
        }
        return StepStatus::Running;
      }
      case kOwnerToNull: {
        auto r = mem.owner_cas(pid, kNullPid);
        ctx.emit_cas(Cell::Owner, 0, pid, kNullPid, r.ok);
        // Failure means a claimant stole ownership between our peek and the
        // CAS; it owns the outcome now.
        return finish(ctx);
      }
      case kOwnerToHead: {
        auto r = mem.owner_cas(pid, head_seen);
        ctx.emit_cas(Cell::Owner, 0, pid, head_seen, r.ok);
        if (!r.ok) {
          head_seen = kNullPid;
          return finish(ctx);  // stolen; no signal from us
        }
        sched = ScheduleMachine{};
        sched.target = head_seen;
        sched.defect = defect;
        head_seen = kNullPid;
        pc = kSchedule;
        return StepStatus::Running;
      }
      case kSchedule: {
        if (sched.step(mem, ctx) == StepStatus::Done) return finish(ctx);
        return StepStatus::Running;
      }
      default:
        throw ContractViolation("release stepped after completion");
    }
  }

 private:
  StepStatus finish(OpCtx& ctx) {
    detail::emit_plain(ctx, EventKind::EndRelease);
    pc = kDone;
    return StepStatus::Done;
  }
};

// ---------------------------------------------------------------------------
// Blocking-style wrappers for native use: run a machine to completion, one
// atomic access per iteration. Stats land in the ctx the caller passes.

template <class Mem>
bool claim(Mem& mem, Pid pid, RuntimeHooks& hooks, OpCtx& ctx,
           Scenario* scenario_out = nullptr, Defect defect = Defect::kNone) {
  if (pid == kNullPid) throw ContractViolation("claim with null pid");
  ClaimMachine m;
  m.pid = pid;
  m.defect = defect;
  ctx.pid = pid;
  ctx.hooks = &hooks;
  while (m.step(mem, ctx) == StepStatus::Running) {
  }
  if (scenario_out != nullptr) *scenario_out = m.scenario;
  return m.granted();
}

template <class Mem>
void release(Mem& mem, Pid pid, RuntimeHooks& hooks, OpCtx& ctx,
             Defect defect = Defect::kNone) {
  if (pid == kNullPid) throw ContractViolation("release with null pid");
  ReleaseMachine m;
  m.pid = pid;
  m.defect = defect;
  ctx.pid = pid;
  ctx.hooks = &hooks;
  while (m.step(mem, ctx) == StepStatus::Running) {
  }
}

template <class Mem>
void schedule(Mem& mem, Pid caller, Pid target, RuntimeHooks& hooks, OpCtx& ctx) {
  ScheduleMachine m;
  m.target = target;
  ctx.pid = caller;
  ctx.hooks = &hooks;
  while (m.step(mem, ctx) == StepStatus::Running) {
  }
}

// The caller-side completion of a parked claim, entered once the schedule
// signal has arrived: state goes back to ACTIVE and the claim counts as
// granted. One shared access. The explorer calls this directly as the wake
// step of a parked process.
template <class Mem>
void finish_parked_claim(Mem& mem, Pid pid, OpCtx& ctx) {
  ctx.pid = pid;
  ProcState old = detail::state_exchange(mem, ctx, pid, ProcState::Active);
  if (old != ProcState::Scheduled) {
    throw ContractViolation("p" + std::to_string(pid) + " woke from " +
                            to_string(old));
  }
  detail::emit_plain(ctx, EventKind::EndClaimGranted);
}

// Completes a parked claim on the caller's side. Under a cooperative host the
// process is only resumed after its schedule signal, so the state is already
// SCHEDULED on entry and this never loops; the loop is a safety net for
// callers outside that contract.
template <class Mem>
void yield_until_scheduled(Mem& mem, Pid pid, OpCtx& ctx) {
  while (true) {
    ProcState s = mem.state_load(pid);
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Load;
      ev.pid = pid;
      ev.cell = Cell::State;
      ev.index = pid;
      ev.old_value = static_cast<std::uint64_t>(s);
      ctx.sink->on_event(ev);
    }
    if (s == ProcState::Scheduled) break;
  }
  finish_parked_claim(mem, pid, ctx);
}

}  // namespace claimlock
