#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "claimlock/protocol.hpp"
#include "claimlock/queue_machines.hpp"
#include "claimlock/types.hpp"

// The explorer's world: every shared cell and every process's in-flight
// machine as one plain value type. Steps mutate a copy; visited-state
// deduplication works on a bit-packed canonical key of everything that can
// influence future behaviour. Per-operation CAS tallies are deliberately not
// part of the key: they are diagnostics attached to edges, not state.

namespace claimlock {

inline constexpr std::uint32_t kMaxModelProcs = 5;
inline constexpr std::uint32_t kMaxModelCycles = 3;
inline constexpr std::uint32_t kMaxModelSlots = arena_slot_count(kMaxModelProcs);

// What a process is doing between steps. Claiming covers the whole claim
// call; Parked is the window between a denied claim and the wake that
// completes it; Releasing runs from the grant (the critical section) through
// the release call.
enum class Phase : std::uint8_t {
  Claiming = 0,
  Parked = 1,
  Releasing = 2,
  Done = 3,
};

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Claiming: return "claiming";
    case Phase::Parked: return "parked";
    case Phase::Releasing: return "releasing";
    case Phase::Done: return "done";
  }
  return "?";
}

struct OpCounters {
  std::uint32_t cas_total = 0;
  std::uint32_t link_retries = 0;
  std::uint32_t help_swings = 0;
};

struct ProcCore {
  ProcState state = ProcState::Active;
  Phase phase = Phase::Claiming;
  std::uint8_t cycle = 0;
  ClaimMachine claim;
  ReleaseMachine release;
  OpCounters counters;  // current operation's tally; excluded from the key
};

struct ModelState {
  std::uint32_t process_count = 0;
  std::uint32_t cycles = 1;

  Pid owner = kNullPid;
  TaggedRef head;
  TaggedRef tail;
  std::array<TaggedRef, kMaxModelSlots> next{};
  std::array<std::uint8_t, kMaxModelSlots> live{};
  std::array<std::uint8_t, kMaxModelSlots> incarnation{};
  std::array<std::uint8_t, kMaxModelProcs + 1> alt{};

  std::array<ProcCore, kMaxModelProcs + 1> procs{};  // index = pid, [0] unused

  static ModelState initial(std::uint32_t process_count, std::uint32_t cycles,
                            Defect defect) {
    if (process_count == 0 || process_count > kMaxModelProcs) {
      throw ContractViolation("model supports 1.." +
                              std::to_string(kMaxModelProcs) + " processes");
    }
    if (cycles == 0 || cycles > kMaxModelCycles) {
      throw ContractViolation("model supports 1.." +
                              std::to_string(kMaxModelCycles) + " cycles");
    }
    ModelState s;
    s.process_count = process_count;
    s.cycles = cycles;
    s.head = TaggedRef::make(kDummySlot, 0);
    s.tail = TaggedRef::make(kDummySlot, 0);
    for (auto& n : s.next) n = TaggedRef::nil();
    s.live[kDummySlot] = 1;
    for (Pid p = 1; p <= process_count; ++p) {
      s.procs[p].claim.pid = p;
      s.procs[p].claim.defect = defect;
      s.procs[p].release.pid = p;
      s.procs[p].release.defect = defect;
    }
    return s;
  }

  bool all_done() const {
    for (Pid p = 1; p <= process_count; ++p) {
      if (procs[p].phase != Phase::Done) return false;
    }
    return true;
  }
};

// Queue structure as seen by walking head->next. `ok` is false when the walk
// finds corruption (a cycle, a dead node, a duplicate pid, a lost tail).
struct QueueWalk {
  bool ok = true;
  std::string error;
  std::vector<Pid> values;          // queue content in FIFO order
  std::vector<std::uint32_t> slots;  // dummy first, then value nodes
};

inline QueueWalk walk_queue(const ModelState& s) {
  QueueWalk w;
  std::uint32_t cur = s.head.slot();
  w.slots.push_back(cur);
  for (std::uint32_t hops = 0;; ++hops) {
    if (hops > kMaxModelSlots) {
      w.ok = false;
      w.error = "queue walk exceeds arena size (cycle?)";
      return w;
    }
    if (cur >= kMaxModelSlots || !s.live[cur]) {
      w.ok = false;
      w.error = "queue reaches dead slot " + std::to_string(cur);
      return w;
    }
    TaggedRef nxt = s.next[cur];
    if (nxt.is_nil()) break;
    cur = nxt.slot();
    w.slots.push_back(cur);
    Pid v = owner_of_slot(cur);
    for (Pid seen : w.values) {
      if (seen == v) {
        w.ok = false;
        w.error = "pid " + std::to_string(v) + " queued twice";
        return w;
      }
    }
    w.values.push_back(v);
  }
  // Michael/Scott keeps tail on the last node or at most one behind it.
  std::uint32_t t = s.tail.slot();
  std::size_t n = w.slots.size();
  bool tail_ok = (w.slots[n - 1] == t) || (n >= 2 && w.slots[n - 2] == t);
  if (!tail_ok) {
    w.ok = false;
    w.error = "tail slot " + std::to_string(t) + " not at the queue end";
  }
  return w;
}

// Mem policy over a ModelState: plain reads and writes, since the explorer
// serializes all accesses itself.
class ModelMem {
 public:
  explicit ModelMem(ModelState& s) : s_(s) {}

  Pid owner_load() { return s_.owner; }
  CasResult owner_cas(Pid expected, Pid desired) {
    if (s_.owner == expected) {
      s_.owner = desired;
      return CasResult{true, expected};
    }
    return CasResult{false, s_.owner};
  }
  Pid owner_store(Pid v) {
    Pid old = s_.owner;
    s_.owner = v;
    return old;
  }

  ProcState state_load(Pid pid) { return s_.procs[pid].state; }
  CasResult state_cas(Pid pid, ProcState expected, ProcState desired) {
    auto& cell = s_.procs[pid].state;
    if (cell == expected) {
      cell = desired;
      return CasResult{true, static_cast<std::uint64_t>(expected)};
    }
    return CasResult{false, static_cast<std::uint64_t>(cell)};
  }
  ProcState state_store(Pid pid, ProcState v) {
    ProcState old = s_.procs[pid].state;
    s_.procs[pid].state = v;
    return old;
  }

  TaggedRef qhead_load() { return s_.head; }
  CasResult qhead_cas(TaggedRef expected, TaggedRef desired) {
    if (s_.head == expected) {
      s_.head = desired;
      return CasResult{true, expected.bits};
    }
    return CasResult{false, s_.head.bits};
  }
  TaggedRef qtail_load() { return s_.tail; }
  CasResult qtail_cas(TaggedRef expected, TaggedRef desired) {
    if (s_.tail == expected) {
      s_.tail = desired;
      return CasResult{true, expected.bits};
    }
    return CasResult{false, s_.tail.bits};
  }

  TaggedRef next_load(std::uint32_t slot) { return s_.next[slot]; }
  CasResult next_cas(std::uint32_t slot, TaggedRef expected, TaggedRef desired) {
    if (s_.next[slot] == expected) {
      s_.next[slot] = desired;
      return CasResult{true, expected.bits};
    }
    return CasResult{false, s_.next[slot].bits};
  }
  TaggedRef next_store(std::uint32_t slot, TaggedRef v) {
    TaggedRef old = s_.next[slot];
    s_.next[slot] = v;
    return old;
  }

  std::uint32_t alloc_slot(Pid pid) {
    std::uint32_t a = s_.alt[pid];
    s_.alt[pid] ^= 1u;
    std::uint32_t slot = slot_for(pid, a);
    if (s_.live[slot]) {
      throw ContractViolation("arena slot " + std::to_string(slot) +
                              " still live at reuse");
    }
    s_.live[slot] = 1;
    s_.incarnation[slot] += 1;
    return slot;
  }
  std::uint64_t fresh_next_tag(std::uint32_t slot) {
    return 2ull * s_.incarnation[slot];
  }
  void retire_slot(std::uint32_t slot) {
    if (!s_.live[slot]) {
      throw ContractViolation("slot " + std::to_string(slot) +
                              " retired while not live");
    }
    s_.live[slot] = 0;
  }

 private:
  ModelState& s_;
};

// ---------------------------------------------------------------------------
// Canonical key. Fixed bit layout; the claim-side and release-side machine
// fields overlay each other because a process is never in both, with the
// phase disambiguating. Field widths carry headroom over the worst case at
// the model bounds (5 processes, 3 cycles) and every write is range-checked,
// so an overflow can never silently alias two distinct states.

struct PackedKey {
  std::array<std::uint64_t, 9> w{};
  friend bool operator==(const PackedKey& a, const PackedKey& b) {
    return a.w == b.w;
  }
};

struct PackedKeyHash {
  std::size_t operator()(const PackedKey& k) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the words
    for (std::uint64_t word : k.w) {
      for (int i = 0; i < 8; ++i) {
        h ^= (word >> (8 * i)) & 0xFFu;
        h *= 1099511628211ull;
      }
    }
    return static_cast<std::size_t>(h);
  }
};

namespace detail {

class BitWriter {
 public:
  explicit BitWriter(PackedKey& k) : k_(k) {}

  void put(std::uint64_t value, std::uint32_t width) {
    if (width < 64 && value >> width) {
      throw ContractViolation("state packing overflow: value " +
                              std::to_string(value) + " needs more than " +
                              std::to_string(width) + " bits");
    }
    if (pos_ + width > 64 * k_.w.size()) {
      throw ContractViolation("state packing ran past the key");
    }
    std::uint32_t word = pos_ >> 6;
    std::uint32_t off = pos_ & 63u;
    k_.w[word] |= value << off;
    if (off + width > 64) k_.w[word + 1] |= value >> (64 - off);
    pos_ += width;
  }

  void put_ref(TaggedRef r) {
    put(r.is_nil() ? 15u : r.slot(), 4);
    put(r.tag(), 6);
  }

  std::uint32_t pos() const { return pos_; }

 private:
  PackedKey& k_;
  std::uint32_t pos_ = 0;
};

}  // namespace detail

inline PackedKey pack_state(const ModelState& s) {
  PackedKey key;
  detail::BitWriter bw(key);
  bw.put(s.owner, 3);
  bw.put_ref(s.head);
  bw.put_ref(s.tail);
  for (std::uint32_t i = 0; i < kMaxModelSlots; ++i) bw.put_ref(s.next[i]);
  for (std::uint32_t i = 0; i < kMaxModelSlots; ++i) bw.put(s.live[i], 1);
  for (std::uint32_t i = 0; i < kMaxModelSlots; ++i) bw.put(s.incarnation[i], 2);
  for (Pid p = 1; p <= kMaxModelProcs; ++p) bw.put(s.alt[p], 1);
  for (Pid p = 1; p <= kMaxModelProcs; ++p) {
    const ProcCore& pc = s.procs[p];
    bw.put(static_cast<std::uint64_t>(pc.state), 2);
    bw.put(static_cast<std::uint64_t>(pc.phase), 2);
    bw.put(pc.cycle, 2);
    std::uint32_t mark = bw.pos();
    if (pc.phase == Phase::Releasing) {
      const ReleaseMachine& r = pc.release;
      bw.put(r.pc, 3);
      bw.put(r.head_seen, 3);
      bw.put(r.began ? 1 : 0, 1);
      bw.put(r.deq.pc, 3);
      bw.put_ref(r.deq.head_ref);
      bw.put_ref(r.deq.tail_ref);
      bw.put_ref(r.deq.next_ref);
      bw.put(r.peek.pc, 2);
      bw.put_ref(r.peek.head_ref);
      bw.put_ref(r.peek.next_ref);
      bw.put(r.sched.pc, 2);
      bw.put(r.sched.target, 3);
    } else {
      const ClaimMachine& c = pc.claim;
      bw.put(c.pc, 4);
      bw.put(c.local_owner, 3);
      bw.put(c.grant_scenario, 4);
      bw.put(c.enq.pc, 3);
      bw.put(c.enq.node_slot, 4);
      bw.put_ref(c.enq.tail_ref);
      bw.put_ref(c.enq.next_ref);
      bw.put(c.enq.next_is_nil ? 1 : 0, 1);
      bw.put(c.peek.pc, 2);
      bw.put_ref(c.peek.head_ref);
      bw.put_ref(c.peek.next_ref);
    }
    // Pad the overlay so both layouts occupy the same span.
    constexpr std::uint32_t kOverlayBits = 67;
    std::uint32_t used = bw.pos() - mark;
    while (used + 32 <= kOverlayBits) {
      bw.put(0, 32);
      used += 32;
    }
    if (used < kOverlayBits) bw.put(0, kOverlayBits - used);
  }
  return key;
}

inline std::string describe_state(const ModelState& s) {
  std::string out = "owner=" + std::to_string(s.owner) + " queue=[";
  QueueWalk w = walk_queue(s);
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(w.values[i]);
  }
  out += w.ok ? "]" : ("] (" + w.error + ")");
  for (Pid p = 1; p <= s.process_count; ++p) {
    const ProcCore& pc = s.procs[p];
    out += " p" + std::to_string(p) + "{" + to_string(pc.state);
    out += ",";
    out += to_string(pc.phase);
    out += ",cycle " + std::to_string(pc.cycle) + "}";
  }
  return out;
}

}  // namespace claimlock
