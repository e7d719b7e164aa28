#pragma once

#include <cstdint>

#include "claimlock/types.hpp"

// Michael/Scott-style lock-free FIFO queue of pids, written as explicit step
// machines: every call to step() performs exactly one shared-memory access
// and then returns. A native caller just loops until Done (which is the real
// algorithm, one atomic op per iteration); the interleaving explorer runs one
// step per scheduling choice.
//
// Node storage is a bounded arena with tagged references:
//
//   slot 0            initial dummy, never reused
//   slots 2p-1, 2p    owned by pid p, used alternately for successive
//                     enqueues
//
// A slot's value is its owner pid, fixed forever, so a value read through a
// stale reference can never observe a foreign value. The next-field tag is
// 2*incarnation + linked-bit: one link per incarnation, reset on reuse, which
// the slot owner can compute without reading the cell. head/tail tags bump on
// every swing. Re-reading head/tail before acting (as in the original
// algorithm) is what makes slot reuse ABA-safe; those loads are mandatory.
//
// Linearization points, which is where commit events are emitted:
//   enqueue  the successful next-link CAS
//   dequeue  the successful head-swing CAS (empty: the nil next read,
//            confirmed by the following head re-read)
//   peek     the validating head re-read (empty: the nil next read)

namespace claimlock {

inline constexpr std::uint32_t kDummySlot = 0;

inline constexpr std::uint32_t arena_slot_count(std::uint32_t process_count) {
  return 2 * process_count + 1;
}

// pid p's two slots; `alt` flips between 0 and 1 on successive enqueues.
inline constexpr std::uint32_t slot_for(Pid pid, std::uint32_t alt) {
  return 2 * pid - 1 + alt;
}

inline constexpr Pid owner_of_slot(std::uint32_t slot) {
  return slot == kDummySlot ? kNullPid : static_cast<Pid>((slot + 1) / 2);
}

enum class StepStatus : std::uint8_t { Running, Done };

// Per-operation bookkeeping threaded through the machines. `sink` may be
// null. CAS tallies separate the protocol's structural cost (what the cost
// table prices) from contention extras (retried links, help-swings).
struct OpCtx {
  Pid pid = kNullPid;
  TraceSink* sink = nullptr;
  RuntimeHooks* hooks = nullptr;

  std::uint32_t cas_total = 0;     // every CAS attempt issued
  std::uint32_t link_retries = 0;  // failed enqueue link CASes
  std::uint32_t help_swings = 0;   // tail CASes issued to help a half-done enqueue

  void emit(const TraceEvent& ev) {
    if (sink != nullptr) sink->on_event(ev);
  }
  void emit_cas(Cell cell, std::uint32_t index, std::uint64_t expected,
                std::uint64_t desired, bool ok) {
    ++cas_total;
    if (sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Cas;
      ev.pid = pid;
      ev.cell = cell;
      ev.index = index;
      ev.old_value = expected;
      ev.new_value = desired;
      ev.success = ok;
      sink->on_event(ev);
    }
  }
  void emit_commit(EventKind kind, Pid value) {
    if (sink != nullptr) {
      TraceEvent ev;
      ev.kind = kind;
      ev.pid = pid;
      ev.value = value;
      sink->on_event(ev);
    }
  }
};

// ---------------------------------------------------------------------------
// Enqueue: reset own node, then the usual load-tail / load-next / revalidate
// loop; link CAS is the linearization point, followed by one tail-swing
// attempt (a failure means somebody helped, which is fine).
struct EnqueueMachine {
  enum Pc : std::uint8_t {
    kReset,
    kLoadTail,
    kLoadNext,
    kValidateTail,
    kLinkOrHelp,
    kSwing,
    kDone,
  };

  std::uint32_t node_slot = 0;
  std::uint8_t pc = kReset;
  TaggedRef tail_ref;
  TaggedRef next_ref;
  bool next_is_nil = false;

  bool done() const { return pc == kDone; }

  template <class Mem>
  StepStatus step(Mem& mem, OpCtx& ctx) {
    switch (pc) {
      case kReset: {
        // Allocation is local bookkeeping: flip the caller's alternate slot,
        // bump its incarnation (faults if the slot is somehow still
        // reachable). The store is the step's one shared access: next
        // becomes (nil, 2*incarnation) and stale refs into this slot now
        // fail their tag checks.
        node_slot = mem.alloc_slot(ctx.pid);
        TaggedRef reset_ref =
            TaggedRef::make(TaggedRef::kNilSlot, mem.fresh_next_tag(node_slot));
        TaggedRef old = mem.next_store(node_slot, reset_ref);
        emit_store(ctx, Cell::NodeNext, node_slot, old.bits, reset_ref.bits);
        pc = kLoadTail;
        return StepStatus::Running;
      }
      case kLoadTail: {
        tail_ref = mem.qtail_load();
        emit_load(ctx, Cell::QueueTail, 0, tail_ref.bits);
        pc = kLoadNext;
        return StepStatus::Running;
      }
      case kLoadNext: {
        next_ref = mem.next_load(tail_ref.slot());
        emit_load(ctx, Cell::NodeNext, tail_ref.slot(), next_ref.bits);
        next_is_nil = next_ref.is_nil();
        pc = kValidateTail;
        return StepStatus::Running;
      }
      case kValidateTail: {
        TaggedRef now = mem.qtail_load();
        emit_load(ctx, Cell::QueueTail, 0, now.bits);
        if (now != tail_ref) {
          restart();  // tail moved under us, start over
        } else {
          pc = kLinkOrHelp;
        }
        return StepStatus::Running;
      }
      case kLinkOrHelp: {
        if (next_is_nil) {
          TaggedRef mine = TaggedRef::make(node_slot, next_ref.tag() + 1);
          auto r = mem.next_cas(tail_ref.slot(), next_ref, mine);
          ctx.emit_cas(Cell::NodeNext, tail_ref.slot(), next_ref.bits, mine.bits, r.ok);
          if (r.ok) {
            ctx.emit_commit(EventKind::EnqueueCommit, ctx.pid);
            pc = kSwing;
          } else {
            ++ctx.link_retries;
            restart();
          }
        } else {
          // Tail is lagging behind a half-finished enqueue; help swing it.
          TaggedRef target = TaggedRef::make(next_ref.slot(), tail_ref.tag() + 1);
          auto r = mem.qtail_cas(tail_ref, target);
          ctx.emit_cas(Cell::QueueTail, 0, tail_ref.bits, target.bits, r.ok);
          ++ctx.help_swings;
          restart();
        }
        return StepStatus::Running;
      }
      case kSwing: {
        TaggedRef target = TaggedRef::make(node_slot, tail_ref.tag() + 1);
        auto r = mem.qtail_cas(tail_ref, target);
        ctx.emit_cas(Cell::QueueTail, 0, tail_ref.bits, target.bits, r.ok);
        // A failed swing means another process already moved tail past us.
        restart();
        pc = kDone;
        return StepStatus::Done;
      }
      default:
        throw ContractViolation("enqueue stepped after completion");
    }
  }

 private:
  // Dead locals are cleared on every loop-back so that two runs arriving at
  // the same point hold bit-identical machines; the explorer dedups on raw
  // state and must not fragment on stale temporaries.
  void restart() {
    tail_ref = TaggedRef::nil();
    next_ref = TaggedRef::nil();
    next_is_nil = false;
    pc = kLoadTail;
  }

  static void emit_load(OpCtx& ctx, Cell cell, std::uint32_t index, std::uint64_t v) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Load;
      ev.pid = ctx.pid;
      ev.cell = cell;
      ev.index = index;
      ev.old_value = v;
      ctx.sink->on_event(ev);
    }
  }
  static void emit_store(OpCtx& ctx, Cell cell, std::uint32_t index,
                         std::uint64_t old_v, std::uint64_t new_v) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Store;
      ev.pid = ctx.pid;
      ev.cell = cell;
      ev.index = index;
      ev.old_value = old_v;
      ev.new_value = new_v;
      ctx.sink->on_event(ev);
    }
  }
};

// ---------------------------------------------------------------------------
// Dequeue. In protocol use only the current owner dequeues (itself, at the
// head), so the head-swing can never lose a race and the help branch is dead
// weight; both are kept because the queue is usable standalone and the
// explorer will tell us if the protocol ever strays into them.
struct DequeueMachine {
  enum Pc : std::uint8_t {
    kLoadHead,
    kLoadTail,
    kLoadNext,
    kValidateHead,
    kSwingOrHelp,
    kDone,
  };

  std::uint8_t pc = kLoadHead;
  TaggedRef head_ref;
  TaggedRef tail_ref;
  TaggedRef next_ref;
  Pid result = kNullPid;

  bool done() const { return pc == kDone; }

  template <class Mem>
  StepStatus step(Mem& mem, OpCtx& ctx) {
    switch (pc) {
      case kLoadHead: {
        head_ref = mem.qhead_load();
        emit_load(ctx, Cell::QueueHead, head_ref.bits);
        pc = kLoadTail;
        return StepStatus::Running;
      }
      case kLoadTail: {
        tail_ref = mem.qtail_load();
        emit_load(ctx, Cell::QueueTail, tail_ref.bits);
        pc = kLoadNext;
        return StepStatus::Running;
      }
      case kLoadNext: {
        next_ref = mem.next_load(head_ref.slot());
        TraceEvent ev;
        ev.kind = EventKind::Load;
        ev.pid = ctx.pid;
        ev.cell = Cell::NodeNext;
        ev.index = head_ref.slot();
        ev.old_value = next_ref.bits;
        ctx.emit(ev);
        pc = kValidateHead;
        return StepStatus::Running;
      }
      case kValidateHead: {
        TaggedRef now = mem.qhead_load();
        emit_load(ctx, Cell::QueueHead, now.bits);
        if (now != head_ref) {
          restart();
        } else if (head_ref.slot() == tail_ref.slot() && next_ref.is_nil()) {
          // Empty. The nil read at kLoadNext is the linearization point;
          // this confirming re-read is where we can safely report it.
          result = kNullPid;
          ctx.emit_commit(EventKind::DequeueCommit, kNullPid);
          restart();
          pc = kDone;
          return StepStatus::Done;
        } else {
          pc = kSwingOrHelp;  // head==tail here means a lagging tail: help
        }
        return StepStatus::Running;
      }
      case kSwingOrHelp: {
        if (head_ref.slot() == tail_ref.slot()) {
          TaggedRef target = TaggedRef::make(next_ref.slot(), tail_ref.tag() + 1);
          auto r = mem.qtail_cas(tail_ref, target);
          ctx.emit_cas(Cell::QueueTail, 0, tail_ref.bits, target.bits, r.ok);
          ++ctx.help_swings;
          restart();
          return StepStatus::Running;
        }
        Pid v = owner_of_slot(next_ref.slot());  // slot values never change
        TaggedRef target = TaggedRef::make(next_ref.slot(), head_ref.tag() + 1);
        auto r = mem.qhead_cas(head_ref, target);
        ctx.emit_cas(Cell::QueueHead, 0, head_ref.bits, target.bits, r.ok);
        if (r.ok) {
          mem.retire_slot(head_ref.slot());  // old dummy leaves the structure
          result = v;
          ctx.emit_commit(EventKind::DequeueCommit, v);
          restart();
          pc = kDone;
          return StepStatus::Done;
        }
        restart();
        return StepStatus::Running;
      }
      default:
        throw ContractViolation("dequeue stepped after completion");
    }
  }

 private:
  // See EnqueueMachine::restart: dead temporaries must not fragment the
  // explorer's state dedup.
  void restart() {
    head_ref = TaggedRef::nil();
    tail_ref = TaggedRef::nil();
    next_ref = TaggedRef::nil();
    pc = kLoadHead;
  }

  static void emit_load(OpCtx& ctx, Cell cell, std::uint64_t v) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Load;
      ev.pid = ctx.pid;
      ev.cell = cell;
      ev.old_value = v;
      ctx.sink->on_event(ev);
    }
  }
};

// ---------------------------------------------------------------------------
// Peek: head, head->next, head again. No CAS. The value is the next slot's
// owner, which is immutable, so the only thing the re-read must establish is
// that the dummy did not move between the first two loads.
struct PeekMachine {
  enum Pc : std::uint8_t { kLoadHead, kLoadNext, kValidateHead, kDone };

  std::uint8_t pc = kLoadHead;
  TaggedRef head_ref;
  TaggedRef next_ref;
  Pid result = kNullPid;

  bool done() const { return pc == kDone; }

  template <class Mem>
  StepStatus step(Mem& mem, OpCtx& ctx) {
    switch (pc) {
      case kLoadHead: {
        head_ref = mem.qhead_load();
        emit_load(ctx, Cell::QueueHead, 0, head_ref.bits);
        pc = kLoadNext;
        return StepStatus::Running;
      }
      case kLoadNext: {
        next_ref = mem.next_load(head_ref.slot());
        emit_load(ctx, Cell::NodeNext, head_ref.slot(), next_ref.bits);
        if (next_ref.is_nil()) {
          // Linearizes here: the dummy was live at the surrounding head
          // reads, so the queue really was empty at this instant.
          ctx.emit_commit(EventKind::PeekCommit, kNullPid);
        }
        pc = kValidateHead;
        return StepStatus::Running;
      }
      case kValidateHead: {
        TaggedRef now = mem.qhead_load();
        emit_load(ctx, Cell::QueueHead, 0, now.bits);
        if (now != head_ref) {
          restart();
          return StepStatus::Running;
        }
        if (next_ref.is_nil()) {
          result = kNullPid;  // commit already emitted at the nil read
        } else {
          result = owner_of_slot(next_ref.slot());
          ctx.emit_commit(EventKind::PeekCommit, result);
        }
        restart();
        pc = kDone;
        return StepStatus::Done;
      }
      default:
        throw ContractViolation("peek stepped after completion");
    }
  }

 private:
  void restart() {
    head_ref = TaggedRef::nil();
    next_ref = TaggedRef::nil();
    pc = kLoadHead;
  }

  static void emit_load(OpCtx& ctx, Cell cell, std::uint32_t index, std::uint64_t v) {
    if (ctx.sink != nullptr) {
      TraceEvent ev;
      ev.kind = EventKind::Load;
      ev.pid = ctx.pid;
      ev.cell = cell;
      ev.index = index;
      ev.old_value = v;
      ctx.sink->on_event(ev);
    }
  }
};

}  // namespace claimlock
