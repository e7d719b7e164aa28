#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "claimlock/protocol.hpp"

// CAS-cost accounting.
//
// Every claim pays exactly two structural CASes in the queue (the next-link
// and the tail-swing; a swing that fails because somebody helped still counts,
// the attempt is the cost) plus the owner/state CAS attempts of whichever
// branch it exits through. That structural figure is a per-scenario constant
// and is what the design cost table prices. Contention adds physical extras
// on top: re-issued link CASes after a lost race and help-swings of a lagging
// tail. The ledger keeps the two apart: structural cost is checked against
// the table, extras are reported, and an enqueue can retry its link at most
// (competitors x their enqueues) times, which callers can bound.

namespace claimlock {

struct ScenarioCost {
  Scenario id;
  const char* name;
  std::uint32_t structural;  // enqueue(2) + branch CAS attempts, a constant
  std::uint32_t design_min;
  std::uint32_t design_max;  // ignored when unbounded_max
  bool unbounded_max;
};

// Branch arithmetic, counting CAS attempts (failures included):
//   1 unclaimed             2 + owner null->us            = 3   range 3..4
//   2 claimed               2 + park                      = 3   range 3..up
//   3 released_in_time      2 + failed park               = 3   range 3..3
//   4 owner_null            2 + failed owner + store      = 3   range 3..4
//   5 transfer_unscheduled  2 + failed owner + park       = 4   range 4..5
//   6 transfer_scheduled    2 + failed owner + failed park= 4   range 4..5
//   7 ownership_stolen      2 + failed owner + steal      = 4   range 4..5
//   8 released_owner_null   2 + fail + fail + null->us    = 5   range 5..6
//   9 released_unscheduled  2 + fail + fail + fail + park = 6   range 6..7
//  10 released_scheduled    2 + 3 fails + failed park     = 6   range 6..7
// The design ranges allow one link retry caused by a single competing
// enqueue; scenario 2 has no upper bound because a parked process pays for
// however much traffic passes while it is queued behind others; scenario 3
// is exact because the failed park only happens when the releaser has
// already resolved everything, leaving no room for queue interference.
inline const std::array<ScenarioCost, kScenarioCount>& scenario_cost_table() {
  static const std::array<ScenarioCost, kScenarioCount> table = {{
      {Scenario::kUnclaimed, "unclaimed", 3, 3, 4, false},
      {Scenario::kClaimed, "claimed", 3, 3, 0, true},
      {Scenario::kReleasedInTime, "released_in_time", 3, 3, 3, false},
      {Scenario::kOwnerNull, "owner_null", 3, 3, 4, false},
      {Scenario::kTransferUnscheduled, "transfer_unscheduled", 4, 4, 5, false},
      {Scenario::kTransferScheduled, "transfer_scheduled", 4, 4, 5, false},
      {Scenario::kOwnershipStolen, "ownership_stolen", 4, 4, 5, false},
      {Scenario::kReleasedOwnerNull, "released_owner_null", 5, 5, 6, false},
      {Scenario::kReleasedUnscheduled, "released_unscheduled", 6, 6, 7, false},
      {Scenario::kReleasedScheduled, "released_scheduled", 6, 6, 7, false},
  }};
  return table;
}

inline const ScenarioCost& cost_of(Scenario s) {
  return scenario_cost_table()[static_cast<std::uint32_t>(s) - 1];
}

struct ScenarioStats {
  std::uint64_t hits = 0;
  std::uint32_t structural_min = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t structural_max = 0;
  std::uint64_t structural_sum = 0;
  std::uint32_t extra_max = 0;  // link retries + help swings in one claim
  std::uint64_t extra_sum = 0;
};

struct ReleaseStats {
  std::uint64_t hits = 0;
  std::uint32_t cas_min = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t cas_max = 0;
  std::uint64_t cas_sum = 0;
};

// Not thread-safe; give each worker its own and merge().
class CasLedger {
 public:
  void record_claim(Scenario s, std::uint32_t cas_total,
                    std::uint32_t link_retries, std::uint32_t help_swings) {
    std::uint32_t extras = link_retries + help_swings;
    std::uint32_t structural = cas_total - extras;
    auto& st = claim_[static_cast<std::uint32_t>(s) - 1];
    ++st.hits;
    if (structural < st.structural_min) st.structural_min = structural;
    if (structural > st.structural_max) st.structural_max = structural;
    st.structural_sum += structural;
    if (extras > st.extra_max) st.extra_max = extras;
    st.extra_sum += extras;
    if (link_retries > link_retry_max_) link_retry_max_ = link_retries;
    if (structural != cost_of(s).structural) {
      problems_.push_back("claim scenario " + std::string(to_string(s)) +
                          " cost " + std::to_string(structural) +
                          ", expected " +
                          std::to_string(cost_of(s).structural));
    }
  }

  void record_release(std::uint32_t cas_total, std::uint32_t link_retries) {
    ++release_.hits;
    if (cas_total < release_.cas_min) release_.cas_min = cas_total;
    if (cas_total > release_.cas_max) release_.cas_max = cas_total;
    release_.cas_sum += cas_total;
    if (link_retries > link_retry_max_) link_retry_max_ = link_retries;
  }

  // Checks every observed scenario against the design table. Findings are
  // appended to problems().
  void check_design_bounds() {
    for (const auto& c : scenario_cost_table()) {
      const auto& st = claim_[static_cast<std::uint32_t>(c.id) - 1];
      if (st.hits == 0) continue;
      if (st.structural_min < c.design_min) {
        problems_.push_back(std::string(c.name) + " cost " +
                            std::to_string(st.structural_min) + " below " +
                            std::to_string(c.design_min));
      }
      if (!c.unbounded_max && st.structural_max > c.design_max) {
        problems_.push_back(std::string(c.name) + " cost " +
                            std::to_string(st.structural_max) + " above " +
                            std::to_string(c.design_max));
      }
    }
  }

  void merge(const CasLedger& other) {
    for (std::uint32_t i = 0; i < kScenarioCount; ++i) {
      const auto& o = other.claim_[i];
      auto& st = claim_[i];
      st.hits += o.hits;
      if (o.hits != 0) {
        if (o.structural_min < st.structural_min) st.structural_min = o.structural_min;
        if (o.structural_max > st.structural_max) st.structural_max = o.structural_max;
        st.structural_sum += o.structural_sum;
        if (o.extra_max > st.extra_max) st.extra_max = o.extra_max;
        st.extra_sum += o.extra_sum;
      }
    }
    release_.hits += other.release_.hits;
    if (other.release_.hits != 0) {
      if (other.release_.cas_min < release_.cas_min) release_.cas_min = other.release_.cas_min;
      if (other.release_.cas_max > release_.cas_max) release_.cas_max = other.release_.cas_max;
      release_.cas_sum += other.release_.cas_sum;
    }
    if (other.link_retry_max_ > link_retry_max_) link_retry_max_ = other.link_retry_max_;
    problems_.insert(problems_.end(), other.problems_.begin(), other.problems_.end());
  }

  const ScenarioStats& claim_stats(Scenario s) const {
    return claim_[static_cast<std::uint32_t>(s) - 1];
  }
  const ReleaseStats& release_stats() const { return release_; }
  std::uint32_t link_retry_max() const { return link_retry_max_; }
  const std::vector<std::string>& problems() const { return problems_; }
  std::uint64_t total_claims() const {
    std::uint64_t n = 0;
    for (const auto& st : claim_) n += st.hits;
    return n;
  }

 private:
  std::array<ScenarioStats, kScenarioCount> claim_{};
  ReleaseStats release_{};
  std::uint32_t link_retry_max_ = 0;
  std::vector<std::string> problems_;
};

}  // namespace claimlock
