#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "claimlock/native_state.hpp"
#include "claimlock/queue_machines.hpp"

using namespace claimlock;

namespace {

struct RecordSink final : TraceSink {
  std::vector<TraceEvent> events;
  void on_event(const TraceEvent& ev) override { events.push_back(ev); }

  std::size_t count(EventKind k) const {
    std::size_t n = 0;
    for (const auto& ev : events) {
      if (ev.kind == k) ++n;
    }
    return n;
  }
  const TraceEvent* last(EventKind k) const {
    for (auto it = events.rbegin(); it != events.rend(); ++it) {
      if (it->kind == k) return &*it;
    }
    return nullptr;
  }
};

template <class M>
void run_to_done(M& m, NativeState& mem, OpCtx& ctx) {
  while (m.step(mem, ctx) == StepStatus::Running) {
  }
}

OpCtx ctx_for(Pid pid, TraceSink* sink = nullptr) {
  OpCtx ctx;
  ctx.pid = pid;
  ctx.sink = sink;
  return ctx;
}

}  // namespace

TEST_CASE("dequeue and peek on an empty queue report null") {
  NativeState mem(2);
  RecordSink sink;

  DequeueMachine deq;
  OpCtx ctx = ctx_for(1, &sink);
  run_to_done(deq, mem, ctx);
  CHECK(deq.result == kNullPid);
  CHECK(ctx.cas_total == 0);
  CHECK(sink.count(EventKind::DequeueCommit) == 1);
  CHECK(sink.last(EventKind::DequeueCommit)->value == kNullPid);

  PeekMachine peek;
  run_to_done(peek, mem, ctx);
  CHECK(peek.result == kNullPid);
  CHECK(ctx.cas_total == 0);
  CHECK(sink.count(EventKind::PeekCommit) == 1);
}

TEST_CASE("uncontended enqueue costs exactly a link and a swing") {
  NativeState mem(2);
  RecordSink sink;
  OpCtx ctx = ctx_for(1, &sink);

  EnqueueMachine enq;
  run_to_done(enq, mem, ctx);
  CHECK(enq.node_slot == slot_for(1, 0));
  CHECK(ctx.cas_total == 2);
  CHECK(ctx.link_retries == 0);
  CHECK(ctx.help_swings == 0);
  CHECK(sink.count(EventKind::EnqueueCommit) == 1);
  CHECK(mem.quiescent_queue() == std::vector<Pid>{1});

  PeekMachine peek;
  run_to_done(peek, mem, ctx);
  CHECK(peek.result == 1);

  DequeueMachine deq;
  OpCtx dctx = ctx_for(1, &sink);
  run_to_done(deq, mem, dctx);
  CHECK(deq.result == 1);
  CHECK(dctx.cas_total == 1);  // only the head swing
  CHECK(mem.quiescent_queue().empty());
}

TEST_CASE("losing a link race costs one retry and preserves arrival order") {
  NativeState mem(2);
  OpCtx c1 = ctx_for(1);
  OpCtx c2 = ctx_for(2);

  // p1 stops right before its link CAS; p2 then enqueues completely, so
  // p1's snapshot of the tail is stale and its first link attempt must lose.
  EnqueueMachine e1;
  while (e1.pc != EnqueueMachine::kLinkOrHelp) e1.step(mem, c1);
  EnqueueMachine e2;
  run_to_done(e2, mem, c2);

  run_to_done(e1, mem, c1);
  CHECK(c1.link_retries == 1);
  CHECK(c1.cas_total == 3);  // failed link, then link + swing
  CHECK(mem.quiescent_queue() == std::vector<Pid>{2, 1});
}

TEST_CASE("a half-finished enqueue is helped past the lagging tail") {
  NativeState mem(2);
  OpCtx c1 = ctx_for(1);
  OpCtx c2 = ctx_for(2);

  // p1 links its node but has not swung the tail yet.
  EnqueueMachine e1;
  while (e1.pc != EnqueueMachine::kSwing) e1.step(mem, c1);
  CHECK(c1.cas_total == 1);

  // p2 finds tail->next non-nil, swings the tail on p1's behalf, retries,
  // and completes its own enqueue behind p1's node.
  EnqueueMachine e2;
  run_to_done(e2, mem, c2);
  CHECK(c2.help_swings == 1);
  CHECK(c2.cas_total == 3);  // help swing + own link + own swing
  CHECK(c2.link_retries == 0);

  // p1's own swing now fails harmlessly: the tail has already moved on.
  run_to_done(e1, mem, c1);
  CHECK(c1.cas_total == 2);
  CHECK(mem.quiescent_queue() == std::vector<Pid>{1, 2});
}

TEST_CASE("slots alternate per pid and survive reuse with fresh tags") {
  NativeState mem(2);
  OpCtx ctx = ctx_for(1);

  std::vector<std::uint32_t> slots;
  std::uint64_t last_head_tag = mem.qhead_load().tag();
  for (int round = 0; round < 3; ++round) {
    EnqueueMachine enq;
    run_to_done(enq, mem, ctx);
    slots.push_back(enq.node_slot);
    DequeueMachine deq;
    run_to_done(deq, mem, ctx);
    CHECK(deq.result == 1);
    std::uint64_t tag = mem.qhead_load().tag();
    CHECK(tag > last_head_tag);  // every swing bumps the head tag
    last_head_tag = tag;
  }
  CHECK(slots == std::vector<std::uint32_t>{slot_for(1, 0), slot_for(1, 1),
                                            slot_for(1, 0)});
  CHECK(mem.quiescent_queue().empty());
}

TEST_CASE("machines refuse to run past completion") {
  NativeState mem(1);
  OpCtx ctx = ctx_for(1);
  EnqueueMachine enq;
  run_to_done(enq, mem, ctx);
  CHECK_THROWS_AS(enq.step(mem, ctx), ContractViolation);

  DequeueMachine deq;
  run_to_done(deq, mem, ctx);
  CHECK_THROWS_AS(deq.step(mem, ctx), ContractViolation);
}

TEST_CASE("dequeue after interleaved enqueues drains in FIFO order") {
  NativeState mem(3);
  OpCtx c1 = ctx_for(1);
  OpCtx c2 = ctx_for(2);
  OpCtx c3 = ctx_for(3);

  // Interleave three enqueues step by step, round-robin.
  EnqueueMachine e1, e2, e3;
  bool more = true;
  while (more) {
    more = false;
    if (!e1.done() && e1.step(mem, c1) == StepStatus::Running) more = true;
    if (!e2.done() && e2.step(mem, c2) == StepStatus::Running) more = true;
    if (!e3.done() && e3.step(mem, c3) == StepStatus::Running) more = true;
  }
  std::vector<Pid> order = mem.quiescent_queue();
  REQUIRE(order.size() == 3);

  OpCtx dctx = ctx_for(1);
  for (Pid expect : order) {
    DequeueMachine deq;
    run_to_done(deq, mem, dctx);
    CHECK(deq.result == expect);
  }
  CHECK(mem.quiescent_queue().empty());
}
