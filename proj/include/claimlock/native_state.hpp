#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "claimlock/queue_machines.hpp"
#include "claimlock/types.hpp"

// Real shared memory for the protocol machines: std::atomic cells, seq_cst
// throughout. This is the memory the cooperative runtime and the stress
// harness run against; the explorer uses a plain-struct mirror instead.

namespace claimlock {

class NativeState {
 public:
  explicit NativeState(std::uint32_t process_count)
      : process_count_(process_count),
        states_(process_count + 1),
        slots_(arena_slot_count(process_count)),
        alt_(process_count + 1, 0) {
    owner_.store(kNullPid);
    for (auto& s : states_) s.store(static_cast<std::uint8_t>(ProcState::Active));
    for (auto& s : slots_) {
      s.next.store(TaggedRef::nil().bits);
      s.live.store(false);
      s.incarnation = 0;
    }
    slots_[kDummySlot].live.store(true);
    head_.store(TaggedRef::make(kDummySlot, 0).bits);
    tail_.store(TaggedRef::make(kDummySlot, 0).bits);
  }

  std::uint32_t process_count() const { return process_count_; }

  // --- owner cell ---------------------------------------------------------
  Pid owner_load() { return owner_.load(); }
  CasResult owner_cas(Pid expected, Pid desired) {
    Pid e = expected;
    bool ok = owner_.compare_exchange_strong(e, desired);
    return CasResult{ok, e};
  }
  Pid owner_store(Pid v) { return owner_.exchange(v); }

  // --- per-process scheduling state ---------------------------------------
  ProcState state_load(Pid pid) {
    return static_cast<ProcState>(states_[pid].load());
  }
  CasResult state_cas(Pid pid, ProcState expected, ProcState desired) {
    auto e = static_cast<std::uint8_t>(expected);
    bool ok = states_[pid].compare_exchange_strong(
        e, static_cast<std::uint8_t>(desired));
    return CasResult{ok, e};
  }
  ProcState state_store(Pid pid, ProcState v) {
    return static_cast<ProcState>(
        states_[pid].exchange(static_cast<std::uint8_t>(v)));
  }

  // --- queue head/tail ------------------------------------------------------
  TaggedRef qhead_load() { return TaggedRef{head_.load()}; }
  CasResult qhead_cas(TaggedRef expected, TaggedRef desired) {
    std::uint64_t e = expected.bits;
    bool ok = head_.compare_exchange_strong(e, desired.bits);
    return CasResult{ok, e};
  }
  TaggedRef qtail_load() { return TaggedRef{tail_.load()}; }
  CasResult qtail_cas(TaggedRef expected, TaggedRef desired) {
    std::uint64_t e = expected.bits;
    bool ok = tail_.compare_exchange_strong(e, desired.bits);
    return CasResult{ok, e};
  }

  // --- node arena -----------------------------------------------------------
  TaggedRef next_load(std::uint32_t slot) {
    return TaggedRef{slots_[slot].next.load()};
  }
  CasResult next_cas(std::uint32_t slot, TaggedRef expected, TaggedRef desired) {
    std::uint64_t e = expected.bits;
    bool ok = slots_[slot].next.compare_exchange_strong(e, desired.bits);
    return CasResult{ok, e};
  }
  TaggedRef next_store(std::uint32_t slot, TaggedRef v) {
    return TaggedRef{slots_[slot].next.exchange(v.bits)};
  }

  // Flip to the caller's alternate slot and mark it in use. The slot is
  // guaranteed retired by now (a node is off the structure before its owner's
  // next-but-one enqueue), but the retiring store is a dequeuer's and nothing
  // orders it ahead of this check, so tolerate a propagation delay before
  // declaring the arena corrupt.
  std::uint32_t alloc_slot(Pid pid) {
    std::uint32_t a = alt_[pid];
    alt_[pid] ^= 1u;
    std::uint32_t slot = slot_for(pid, a);
    for (std::uint32_t spin = 0; slots_[slot].live.load(); ++spin) {
      if (spin > 1000000u) {
        throw ContractViolation("arena slot " + std::to_string(slot) +
                                " still live at reuse");
      }
    }
    slots_[slot].live.store(true);
    slots_[slot].incarnation += 1;  // owner-only field
    return slot;
  }

  std::uint64_t fresh_next_tag(std::uint32_t slot) {
    return 2 * slots_[slot].incarnation;
  }

  void retire_slot(std::uint32_t slot) {
    if (!slots_[slot].live.exchange(false)) {
      throw ContractViolation("slot " + std::to_string(slot) +
                              " retired while not live");
    }
  }

  // Test helper. Only meaningful while no operation is in flight.
  std::vector<Pid> quiescent_queue() {
    std::vector<Pid> out;
    TaggedRef cur = qhead_load();
    while (true) {
      TaggedRef next = next_load(cur.slot());
      if (next.is_nil()) break;
      out.push_back(owner_of_slot(next.slot()));
      cur = next;
    }
    return out;
  }

 private:
  struct Slot {
    std::atomic<std::uint64_t> next;
    std::atomic<bool> live;
    std::uint64_t incarnation;
  };

  std::uint32_t process_count_;
  std::atomic<Pid> owner_;
  std::vector<std::atomic<std::uint8_t>> states_;  // index = pid, [0] unused
  std::atomic<std::uint64_t> head_;
  std::atomic<std::uint64_t> tail_;
  std::vector<Slot> slots_;
  std::vector<std::uint8_t> alt_;  // per-pid slot alternation, owner-only
};

}  // namespace claimlock
