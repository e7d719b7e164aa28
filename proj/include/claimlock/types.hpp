#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

// Core vocabulary shared by the protocol machines, the interleaving explorer
// and the cooperative runtime.
//
// A "process" here is a cooperatively scheduled unit of work, identified by a
// small non-zero integer. Pid 0 is the reserved null sentinel so the mutex
// owner fits in one atomic word.

namespace claimlock {

using Pid = std::uint32_t;

inline constexpr Pid kNullPid = 0;

// Scheduling automaton. The only legal transitions are:
//   ACTIVE    -> ENGAGING   (claim begins)
//   ENGAGING  -> ACTIVE     (claim granted in-band)
//   ENGAGING  -> WAITING    (claim not granted, caller parks)
//   ENGAGING  -> SCHEDULED  (releaser signalled an engaging claimant)
//   WAITING   -> SCHEDULED  (releaser woke a parked claimant)
//   SCHEDULED -> ACTIVE     (process runs again)
enum class ProcState : std::uint8_t {
  Active = 0,
  Engaging = 1,
  Waiting = 2,
  Scheduled = 3,
};

inline const char* to_string(ProcState s) {
  switch (s) {
    case ProcState::Active: return "ACTIVE";
    case ProcState::Engaging: return "ENGAGING";
    case ProcState::Waiting: return "WAITING";
    case ProcState::Scheduled: return "SCHEDULED";
  }
  return "?";
}

inline bool legal_state_edge(ProcState from, ProcState to) {
  switch (from) {
    case ProcState::Active: return to == ProcState::Engaging;
    case ProcState::Engaging:
      return to == ProcState::Active || to == ProcState::Waiting ||
             to == ProcState::Scheduled;
    case ProcState::Waiting: return to == ProcState::Scheduled;
    case ProcState::Scheduled: return to == ProcState::Active;
  }
  return false;
}

// Tagged node reference used by the wait queue. The arena is a fixed array of
// node slots; a reference is (slot, tag) packed into one word so that every
// CAS on head/tail/next is tag-checked and slot reuse cannot cause ABA.
struct TaggedRef {
  static constexpr std::uint32_t kNilSlot = 0xFFFFu;

  std::uint64_t bits = pack(kNilSlot, 0);

  static constexpr std::uint64_t pack(std::uint32_t slot, std::uint64_t tag) {
    return (tag << 16) | slot;
  }
  static TaggedRef nil() { return TaggedRef{}; }
  static TaggedRef make(std::uint32_t slot, std::uint64_t tag) {
    return TaggedRef{pack(slot, tag)};
  }

  std::uint32_t slot() const { return static_cast<std::uint32_t>(bits & 0xFFFFu); }
  std::uint64_t tag() const { return bits >> 16; }
  bool is_nil() const { return slot() == kNilSlot; }

  friend bool operator==(TaggedRef a, TaggedRef b) { return a.bits == b.bits; }
  friend bool operator!=(TaggedRef a, TaggedRef b) { return a.bits != b.bits; }
};

// Result of a compare-and-swap attempt: whether it landed, and the value
// found in the cell (the expected value iff ok).
struct CasResult {
  bool ok = false;
  std::uint64_t old = 0;
};

// Shared cells the machines touch. One machine step performs exactly one
// access to one of these; everything else is process-local.
enum class Cell : std::uint8_t {
  Owner,      // Pid
  State,      // ProcState, indexed by pid
  QueueHead,  // TaggedRef
  QueueTail,  // TaggedRef
  NodeNext,   // TaggedRef, indexed by slot
};

enum class EventKind : std::uint8_t {
  BeginClaim,
  EndClaimGranted,
  EndClaimDenied,
  BeginRelease,
  EndRelease,
  EnqueueCommit,
  DequeueCommit,
  PeekCommit,
  Cas,         // any compare-and-swap attempt, success or failure
  Load,        // plain atomic load
  Store,       // plain atomic store
  ScheduleSignal,  // a schedule CAS landed (payload: in-band or wake)
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::BeginClaim: return "begin_claim";
    case EventKind::EndClaimGranted: return "end_claim_granted";
    case EventKind::EndClaimDenied: return "end_claim_denied";
    case EventKind::BeginRelease: return "begin_release";
    case EventKind::EndRelease: return "end_release";
    case EventKind::EnqueueCommit: return "enqueue_commit";
    case EventKind::DequeueCommit: return "dequeue_commit";
    case EventKind::PeekCommit: return "peek_commit";
    case EventKind::Cas: return "cas";
    case EventKind::Load: return "load";
    case EventKind::Store: return "store";
    case EventKind::ScheduleSignal: return "schedule_signal";
  }
  return "?";
}

// One trace record. Which fields are meaningful depends on `kind`:
//   Cas/Store/Load:  cell (+ index for State/NodeNext), old_value, new_value,
//                    success (always true for Store/Load; old_value of a Load
//                    is the value read)
//   *Commit:         value = pid carried by the queue operation (kNullPid for
//                    an empty dequeue/peek)
//   ScheduleSignal:  value = target pid, success = woke a parked process
//                    (false = consumed in-band by the claimant)
struct TraceEvent {
  EventKind kind{};
  Pid pid = kNullPid;       // issuing process
  Cell cell = Cell::Owner;
  std::uint32_t index = 0;  // pid for State cells, slot for NodeNext cells
  std::uint64_t old_value = 0;
  std::uint64_t new_value = 0;
  bool success = true;
  Pid value = kNullPid;

  std::string describe() const;
};

// Sink for trace events. The explorer records every event on the current
// step edge; the native runtime typically installs a counting sink only.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void on_event(const TraceEvent& ev) = 0;
};

class NullSink final : public TraceSink {
 public:
  void on_event(const TraceEvent&) override {}
};

// Host-runtime integration. on_wait fires when a claim parks its caller
// (the caller must have published its continuation before the parking CAS);
// on_schedule fires only when a releaser's WAITING->SCHEDULED CAS succeeds,
// i.e. exactly when a parked process must be handed back to the run queue.
// The ENGAGING->SCHEDULED case is consumed in-band by the claimant itself and
// must not produce a run-queue entry.
class RuntimeHooks {
 public:
  virtual ~RuntimeHooks() = default;
  virtual void on_wait(Pid) {}
  virtual void on_schedule(Pid) {}
};

inline RuntimeHooks& no_hooks() {
  static RuntimeHooks hooks;
  return hooks;
}

// Caller-contract violations (re-entrant claim, release by non-owner, arena
// misuse) fail fast. These are bugs in the host program, never tolerated
// protocol outcomes.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

namespace detail {
// Queue cells hold tagged refs; raw bits are unreadable in traces.
inline std::string ref_text(std::uint64_t bits) {
  TaggedRef r{bits};
  std::string s = r.is_nil() ? "nil" : "s" + std::to_string(r.slot());
  return s + "/t" + std::to_string(r.tag());
}
}  // namespace detail

inline std::string TraceEvent::describe() const {
  std::string s = to_string(kind);
  s += " p" + std::to_string(pid);
  switch (kind) {
    case EventKind::Cas:
    case EventKind::Store:
    case EventKind::Load: {
      const char* cell_name = cell == Cell::Owner      ? "owner"
                              : cell == Cell::State    ? "state"
                              : cell == Cell::QueueHead ? "q.head"
                              : cell == Cell::QueueTail ? "q.tail"
                                                        : "node.next";
      s += " ";
      s += cell_name;
      if (cell == Cell::State || cell == Cell::NodeNext) {
        s += "[" + std::to_string(index) + "]";
      }
      if (cell == Cell::State) {
        s += " " + std::string(to_string(static_cast<ProcState>(old_value)));
        if (kind != EventKind::Load) {
          s += "->" + std::string(to_string(static_cast<ProcState>(new_value)));
        }
      } else if (cell == Cell::Owner) {
        s += " " + std::to_string(old_value);
        if (kind != EventKind::Load) s += "->" + std::to_string(new_value);
      } else {
        s += " " + detail::ref_text(old_value);
        if (kind != EventKind::Load) s += "->" + detail::ref_text(new_value);
      }
      if (kind == EventKind::Cas) s += success ? " ok" : " fail";
      break;
    }
    case EventKind::EnqueueCommit:
    case EventKind::DequeueCommit:
    case EventKind::PeekCommit:
      s += " value=" + std::to_string(value);
      break;
    case EventKind::ScheduleSignal:
      s += " target=" + std::to_string(value);
      s += success ? " wake" : " in-band";
      break;
    default:
      break;
  }
  return s;
}

}  // namespace claimlock
