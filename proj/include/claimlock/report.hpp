#pragma once

#include <iosfwd>
#include <string>

#include "claimlock/explorer.hpp"

namespace claimlock {

// Structured report, one JSON document. The leading "schema" field names the
// record layout so downstream tooling can detect format drift.
inline constexpr const char* kReportSchema = "claimlock-explore-v1";

std::string render_json_report(const ExplorationReport& rep);
void write_json_report(const ExplorationReport& rep, const std::string& path);

// Line-oriented summaries for terminals.
void print_summary(const ExplorationReport& rep, std::ostream& os);
void print_cas_table(const ExplorationReport& rep, std::ostream& os);

}  // namespace claimlock
