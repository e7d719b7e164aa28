#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "claimlock/native_state.hpp"
#include "claimlock/protocol.hpp"

using namespace claimlock;

// Each test drives the step machines by hand into one of the ten claim exit
// branches and checks the classification, the CAS bill, and the resulting
// shared state. The step counts are not hardcoded; machines are advanced
// until they reach the program counter the script needs.

namespace {

struct ScriptHooks final : RuntimeHooks {
  std::vector<Pid> waited;
  std::vector<Pid> scheduled;
  void on_wait(Pid p) override { waited.push_back(p); }
  void on_schedule(Pid p) override { scheduled.push_back(p); }
};

OpCtx ctx_for(Pid pid, RuntimeHooks* hooks = nullptr) {
  OpCtx ctx;
  ctx.pid = pid;
  ctx.hooks = hooks;
  return ctx;
}

// Advances m until its public pc equals target (asserting it gets there).
template <class M>
void step_until(M& m, NativeState& mem, OpCtx& ctx, std::uint8_t target) {
  int guard = 0;
  while (m.pc != target) {
    REQUIRE(++guard < 100);
    m.step(mem, ctx);
  }
}

template <class M>
void step_to_done(M& m, NativeState& mem, OpCtx& ctx) {
  while (m.step(mem, ctx) == StepStatus::Running) {
  }
}

struct Grip {  // a granted claim we still hold
  NativeState& mem;
  ScriptHooks& hooks;
};

Scenario claim_now(NativeState& mem, Pid pid, ScriptHooks& hooks, OpCtx& ctx,
                   bool expect_granted = true) {
  Scenario sc = Scenario::kNone;
  bool granted = claim(mem, pid, hooks, ctx, &sc);
  CHECK(granted == expect_granted);
  return sc;
}

}  // namespace

TEST_CASE("uncontended claim grants in three CASes and releases in two") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx ctx = ctx_for(1);

  Scenario sc = claim_now(mem, 1, hooks, ctx);
  CHECK(sc == Scenario::kUnclaimed);
  CHECK(ctx.cas_total == 3);  // link + swing + owner
  CHECK(ctx.link_retries == 0);
  CHECK(mem.owner_load() == 1);
  CHECK(mem.state_load(1) == ProcState::Active);
  CHECK(mem.quiescent_queue() == std::vector<Pid>{1});

  OpCtx rctx = ctx_for(1);
  release(mem, 1, hooks, rctx);
  CHECK(rctx.cas_total == 2);  // head swing + owner back to null
  CHECK(mem.owner_load() == kNullPid);
  CHECK(mem.quiescent_queue().empty());
  CHECK(hooks.waited.empty());
  CHECK(hooks.scheduled.empty());
}

TEST_CASE("claiming a held lock parks and the release hands over and wakes") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  OpCtx c2 = ctx_for(2, &hooks);
  Scenario sc = claim_now(mem, 2, hooks, c2, /*expect_granted=*/false);
  CHECK(sc == Scenario::kClaimed);
  CHECK(c2.cas_total == 3);  // link + swing + park
  CHECK(mem.state_load(2) == ProcState::Waiting);
  CHECK(hooks.waited == std::vector<Pid>{2});

  OpCtx r1 = ctx_for(1);
  release(mem, 1, hooks, r1);
  CHECK(r1.cas_total == 4);  // dequeue swing, handover, missed+landed signal
  CHECK(mem.owner_load() == 2);
  CHECK(mem.state_load(2) == ProcState::Scheduled);
  CHECK(hooks.scheduled == std::vector<Pid>{2});

  OpCtx w2 = ctx_for(2);
  finish_parked_claim(mem, 2, w2);
  CHECK(mem.state_load(2) == ProcState::Active);
  CHECK(mem.quiescent_queue() == std::vector<Pid>{2});
}

TEST_CASE("a release signal landing before the park turns it into a grant") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  // p2 stops right before its park CAS; p1's full release then signals p2
  // in-band (ENGAGING -> SCHEDULED), so the park must fail into a grant.
  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kParkCasOuter);

  OpCtx r1 = ctx_for(1);
  release(mem, 1, hooks, r1);
  CHECK(mem.owner_load() == 2);
  CHECK(mem.state_load(2) == ProcState::Scheduled);
  CHECK(hooks.scheduled.empty());  // in-band signal, no runtime wake

  step_to_done(m2, mem, c2);
  CHECK(m2.granted());
  CHECK(m2.scenario == Scenario::kReleasedInTime);
  CHECK(c2.cas_total == 3);  // link + swing + failed park
  CHECK(mem.state_load(2) == ProcState::Active);
}

TEST_CASE("owner observed null after a failed fast path is taken by store") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  // p1's release pauses after seeing an empty queue, still owning the lock.
  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kOwnerToNull);

  // p2 enqueues, finds itself at the head, fails the null CAS against the
  // still-set owner, and re-reads it...
  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kReadOwner);

  // ...after p1 has dropped ownership to null.
  step_to_done(r1, mem, rc1);
  CHECK(mem.owner_load() == kNullPid);

  step_to_done(m2, mem, c2);
  CHECK(m2.granted());
  CHECK(m2.scenario == Scenario::kOwnerNull);
  CHECK(c2.cas_total == 3);  // link + swing + failed null CAS; store is free
  CHECK(mem.owner_load() == 2);
}

TEST_CASE("handover before the park CAS parks as an unscheduled transfer") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kPeek);  // enqueued, not yet peeked

  // p1 dequeues itself, sees p2 waiting, hands ownership over, but pauses
  // before signalling.
  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kSchedule);
  CHECK(mem.owner_load() == 2);

  // p2 sees itself at the head, fails the null CAS, reads itself as owner,
  // and parks because the signal has not landed yet.
  step_to_done(m2, mem, c2);
  CHECK_FALSE(m2.granted());
  CHECK(m2.scenario == Scenario::kTransferUnscheduled);
  CHECK(c2.cas_total == 4);  // link + swing + failed null CAS + park
  CHECK(hooks.waited == std::vector<Pid>{2});

  step_to_done(r1, mem, rc1);
  CHECK(hooks.scheduled == std::vector<Pid>{2});
  OpCtx w2 = ctx_for(2);
  finish_parked_claim(mem, 2, w2);
  CHECK(mem.state_load(2) == ProcState::Active);
  CHECK(mem.owner_load() == 2);
}

TEST_CASE("handover plus an in-band signal grants without parking") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kPeek);

  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kSchedule);

  // p2 advances to the park decision; p1's signal lands first.
  step_until(m2, mem, c2, ClaimMachine::kParkCasTransfer);
  step_to_done(r1, mem, rc1);
  CHECK(mem.state_load(2) == ProcState::Scheduled);
  CHECK(hooks.scheduled.empty());  // ENGAGING -> SCHEDULED is in-band

  step_to_done(m2, mem, c2);
  CHECK(m2.granted());
  CHECK(m2.scenario == Scenario::kTransferScheduled);
  CHECK(c2.cas_total == 4);
  CHECK(mem.state_load(2) == ProcState::Active);
}

TEST_CASE("a claimant can steal ownership from a paused releaser") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kPeek);

  // p1 pauses right before handing ownership to p2.
  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kOwnerToHead);
  CHECK(mem.owner_load() == 1);

  // p2 reads owner == p1 and CASes it away before the handover.
  step_until(m2, mem, c2, ClaimMachine::kStealCas);
  step_to_done(m2, mem, c2);
  CHECK(m2.granted());
  CHECK(m2.scenario == Scenario::kOwnershipStolen);
  CHECK(c2.cas_total == 4);  // link + swing + failed null CAS + steal
  CHECK(mem.owner_load() == 2);

  // p1's handover CAS fails and it must not signal anyone.
  step_to_done(r1, mem, rc1);
  CHECK(rc1.cas_total == 2);  // dequeue swing + failed handover
  CHECK(hooks.scheduled.empty());
  CHECK(mem.owner_load() == 2);
}

TEST_CASE("a steal losing to owner-to-null falls through to the null CAS") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  // p1's release sees an empty queue (p2 has not linked yet) and pauses
  // before dropping ownership.
  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kOwnerToNull);

  // p2 enqueues, becomes the head, and copies owner == p1.
  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kStealCas);

  // p1 drops ownership to null; p2's steal fails but the null retry wins.
  step_to_done(r1, mem, rc1);
  step_to_done(m2, mem, c2);
  CHECK(m2.granted());
  CHECK(m2.scenario == Scenario::kReleasedOwnerNull);
  CHECK(c2.cas_total == 5);  // link + swing + null CAS + steal + null CAS
  CHECK(mem.owner_load() == 2);
}

TEST_CASE("handover after a missed steal parks as released-unscheduled") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kPeek);

  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kOwnerToHead);

  // p2 copies owner == p1; p1 then hands over and pauses before the signal.
  step_until(m2, mem, c2, ClaimMachine::kStealCas);
  r1.step(mem, rc1);
  CHECK(r1.pc == ReleaseMachine::kSchedule);
  CHECK(mem.owner_load() == 2);

  // Steal fails (owner is p2 now), the null CAS fails too, and the park
  // lands before the signal.
  step_to_done(m2, mem, c2);
  CHECK_FALSE(m2.granted());
  CHECK(m2.scenario == Scenario::kReleasedUnscheduled);
  CHECK(c2.cas_total == 6);
  CHECK(hooks.waited == std::vector<Pid>{2});

  step_to_done(r1, mem, rc1);
  CHECK(hooks.scheduled == std::vector<Pid>{2});
  OpCtx w2 = ctx_for(2);
  finish_parked_claim(mem, 2, w2);
  CHECK(mem.owner_load() == 2);
  CHECK(mem.state_load(2) == ProcState::Active);
}

TEST_CASE("handover and signal after a missed steal grants in-band") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  ClaimMachine m2;
  m2.pid = 2;
  OpCtx c2 = ctx_for(2, &hooks);
  step_until(m2, mem, c2, ClaimMachine::kPeek);

  ReleaseMachine r1;
  r1.pid = 1;
  OpCtx rc1 = ctx_for(1, &hooks);
  step_until(r1, mem, rc1, ReleaseMachine::kOwnerToHead);

  // p2 copies owner == p1, p1 hands over, so the steal and null CAS both
  // miss; p1's signal then lands before p2's park attempt.
  step_until(m2, mem, c2, ClaimMachine::kStealCas);
  r1.step(mem, rc1);
  CHECK(r1.pc == ReleaseMachine::kSchedule);
  CHECK(mem.owner_load() == 2);
  step_until(m2, mem, c2, ClaimMachine::kParkCasLate);
  step_to_done(r1, mem, rc1);
  CHECK(mem.state_load(2) == ProcState::Scheduled);

  step_to_done(m2, mem, c2);
  CHECK(m2.granted());
  CHECK(m2.scenario == Scenario::kReleasedScheduled);
  CHECK(c2.cas_total == 6);
  CHECK(mem.state_load(2) == ProcState::Active);
  CHECK(mem.owner_load() == 2);
}

TEST_CASE("contract faults: double claim, foreign release, null pid") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);

  // p2 releasing a lock it does not hold dequeues p1's node and faults.
  OpCtx r2 = ctx_for(2);
  CHECK_THROWS_AS(release(mem, 2, hooks, r2), ContractViolation);

  OpCtx bad = ctx_for(kNullPid);
  CHECK_THROWS_AS(claim(mem, kNullPid, hooks, bad), ContractViolation);
  CHECK_THROWS_AS(release(mem, kNullPid, hooks, bad), ContractViolation);
}

TEST_CASE("a parked process must not wake without its signal") {
  NativeState mem(2);
  ScriptHooks hooks;
  OpCtx c1 = ctx_for(1);
  claim_now(mem, 1, hooks, c1);
  OpCtx c2 = ctx_for(2, &hooks);
  claim_now(mem, 2, hooks, c2, /*expect_granted=*/false);

  // Still WAITING: resuming now is a runtime bug and must fault.
  OpCtx w2 = ctx_for(2);
  CHECK_THROWS_AS(finish_parked_claim(mem, 2, w2), ContractViolation);
}
