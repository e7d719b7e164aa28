#include "claimlock/report.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace claimlock {
namespace {

using nlohmann::json;

json oracle_record(const OracleReport& o, const ExplorationReport& rep) {
  json j;
  j["name"] = o.name;
  j["verdict"] = o.ok() ? "pass" : "fail";
  j["violations"] = o.violations;
  j["states"] = rep.states;
  j["paths"] = rep.paths;
  if (o.first) {
    json c;
    c["detail"] = o.first->detail;
    c["trace"] = o.first->trace;
    j["counterexample"] = c;
  }
  return j;
}

json scenario_record(const ScenarioRow& s) {
  json j;
  j["id"] = s.id;
  j["name"] = s.name;
  j["hits"] = s.hits;
  if (s.hits != 0) {
    j["cas_min"] = s.cas_min;
    j["cas_max"] = s.cas_max;
    j["cas_mean"] = s.cas_mean;
    j["extra_cas_max"] = s.extra_max;
  }
  j["design_min"] = s.design_min;
  if (s.unbounded_max) {
    j["design_max"] = nullptr;
  } else {
    j["design_max"] = s.design_max;
  }
  j["within_bounds"] = s.within_bounds;
  return j;
}

std::string bounds_text(const ScenarioRow& s) {
  if (s.unbounded_max) {
    return std::to_string(s.design_min) + "..inf (N-1 retries/cycle)";
  }
  return std::to_string(s.design_min) + ".." + std::to_string(s.design_max);
}

std::string observed_text(const ScenarioRow& s) {
  if (s.hits == 0) return "-";
  return std::to_string(s.cas_min) + ".." + std::to_string(s.cas_max);
}

}  // namespace

std::string render_json_report(const ExplorationReport& rep) {
  json j;
  j["schema"] = kReportSchema;
  j["config"] = {{"processes", rep.processes},
                 {"cycles", rep.cycles},
                 {"defect", rep.defect}};
  j["totals"] = {{"states", rep.states},
                 {"edges", rep.edges},
                 {"paths", rep.paths},
                 {"paths_saturated", rep.paths_saturated},
                 {"complete", rep.complete}};
  j["oracles"] = json::array();
  for (const auto& o : rep.oracles) j["oracles"].push_back(oracle_record(o, rep));
  j["scenarios"] = json::array();
  for (const auto& s : rep.scenarios) j["scenarios"].push_back(scenario_record(s));
  j["release"] = {{"hits", rep.release.hits},
                  {"cas_min", rep.release.hits ? rep.release.cas_min : 0},
                  {"cas_max", rep.release.cas_max}};
  j["queue"] = {{"link_retry_max", rep.link_retry_max},
                {"link_retry_bound", rep.link_retry_bound},
                {"within_bound", rep.link_retry_max <= rep.link_retry_bound}};
  if (rep.witness && rep.witness->found) {
    json w;
    w["begin_order"] = rep.witness->begin_order;
    w["end_order_a"] = rep.witness->end_order_a;
    w["end_order_b"] = rep.witness->end_order_b;
    w["trace_a"] = rep.witness->trace_a;
    w["trace_b"] = rep.witness->trace_b;
    j["witness"] = w;
  }
  return j.dump(2);
}

void write_json_report(const ExplorationReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  out << render_json_report(rep) << '\n';
}

void print_summary(const ExplorationReport& rep, std::ostream& os) {
  os << "exploration: processes=" << rep.processes << " cycles=" << rep.cycles
     << " defect=" << rep.defect << '\n';
  os << "  states=" << rep.states << " edges=" << rep.edges
     << " complete=" << (rep.complete ? "yes" : "no") << " paths=" << rep.paths
     << (rep.paths_saturated ? "+ (saturated)" : "") << '\n';
  for (const auto& o : rep.oracles) {
    os << "  oracle " << std::left << std::setw(24) << o.name
       << (o.ok() ? "PASS" : "FAIL");
    if (!o.ok()) os << "  (" << o.violations << " violations)";
    os << '\n';
    if (o.first) {
      os << "    first: " << o.first->detail << '\n';
      for (const std::string& line : o.first->trace) {
        os << "      " << line << '\n';
      }
    }
  }
  print_cas_table(rep, os);
  if (rep.witness) {
    const NondetWitness& w = rep.witness.value();
    if (w.found) {
      auto seq = [](const std::vector<Pid>& v) {
        std::string s = "<";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) s += ",";
          s += "p" + std::to_string(v[i]);
        }
        return s + ">";
      };
      os << "  order witness: begin_claim " << seq(w.begin_order)
         << " grants as " << seq(w.end_order_a) << " in one run and "
         << seq(w.end_order_b) << " in another\n";
      os << "    run A:\n";
      for (const auto& line : w.trace_a) os << "      " << line << '\n';
      os << "    run B:\n";
      for (const auto& line : w.trace_b) os << "      " << line << '\n';
    } else {
      os << "  order witness: none found\n";
    }
  }
}

void print_cas_table(const ExplorationReport& rep, std::ostream& os) {
  os << "  claim cost per scenario (successful CAS + committed swings):\n";
  os << "    " << std::left << std::setw(4) << "id" << std::setw(24) << "name"
     << std::setw(8) << "hits" << std::setw(10) << "observed" << std::setw(8)
     << "mean" << std::setw(28) << "design bounds"
     << "verdict\n";
  for (const auto& s : rep.scenarios) {
    std::ostringstream mean;
    if (s.hits != 0) mean << std::fixed << std::setprecision(2) << s.cas_mean;
    os << "    " << std::left << std::setw(4) << static_cast<int>(s.id)
       << std::setw(24) << s.name
       << std::setw(8) << s.hits << std::setw(10) << observed_text(s)
       << std::setw(8) << (s.hits ? mean.str() : "-") << std::setw(28)
       << bounds_text(s) << (s.within_bounds ? "PASS" : "FAIL") << '\n';
  }
  if (rep.release.hits != 0) {
    os << "    release: hits=" << rep.release.hits << " cas="
       << rep.release.cas_min << ".." << rep.release.cas_max << '\n';
  }
  os << "    enqueue link retries: max=" << rep.link_retry_max
     << " bound=" << rep.link_retry_bound << " ("
     << (rep.link_retry_max <= rep.link_retry_bound ? "PASS" : "FAIL")
     << ")\n";
}

}  // namespace claimlock
