#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ostm/history.hpp"

namespace ostm {

enum class EdgeType : std::uint8_t { TryCTryC, TryCRv, RvTryC, RealTime };

const char* to_string(EdgeType t);

struct ConflictEdge {
  Timestamp from = 0;
  Timestamp to = 0;
  EdgeType type = EdgeType::RealTime;
  ObjId obj = 0;  // contended object/key; zeroed for RealTime edges
  Key key = 0;

  bool operator==(const ConflictEdge&) const = default;
};

struct LegalityViolation {
  std::uint64_t method_lp = 0;  // the offending method's effect point
  std::uint64_t update_lp = 0;  // the commit it clashes with (0 = initial state)
  std::string reason;
};

struct MalformedHistory : std::runtime_error {
  explicit MalformedHistory(const std::string& what)
      : std::runtime_error("malformed history: " + what) {}
};

struct TooLargeHistory : std::runtime_error {
  explicit TooLargeHistory(const std::string& what)
      : std::runtime_error("history too large to enumerate: " + what) {}
};

// Checks the three sequential legality rules against the lp order:
//  - a method over a key the transaction already touched must agree with the
//    transaction's own log;
//  - a first read returning a value must be preceded by a committed insert
//    of exactly that value, with no other committed update in between;
//  - a first read returning nil must have a committed delete (or the initial
//    empty state) as its nearest preceding committed update.
// Incomplete transactions count as aborted. Throws MalformedHistory.
std::optional<LegalityViolation> check_legality(const History& h);

// Conflict edges between transactions: committed-update vs committed-update,
// committed-update vs first read, and first read vs committed-update on the
// same (obj, key), ordered by effect points. Methods that aborted are not
// reads. Plus real-time edges between all (completed) transactions.
std::vector<ConflictEdge> find_conflicts(const History& h);

struct ConflictGraph {
  std::vector<Timestamp> vertices;
  std::vector<ConflictEdge> edges;
};

ConflictGraph build_conflict_graph(const History& h);

// Total order extending every edge; ties broken by ascending transaction id.
// Returns nullopt on a cycle and, if `cycle` is given, fills it with one
// offending loop.
std::optional<std::vector<Timestamp>> topological_serialize(
    const ConflictGraph& g, std::vector<Timestamp>* cycle = nullptr);

struct Verdict {
  bool co_opaque = false;
  bool legal = false;
  std::vector<Timestamp> witness;  // serialization, when co_opaque
  std::vector<Timestamp> cycle;    // offending loop, when conflicts cycle
  std::optional<LegalityViolation> violation;
  std::vector<ConflictEdge> edges;
};

Verdict check_co_opacity(const History& h);

// Replays the history's transactions serially in `order` through a map
// model (committed updates apply, aborted ones don't) and reports whether
// every completed method reproduces its recorded return.
bool replay_matches(const History& h, const std::vector<Timestamp>& order);

// Ground-truth opacity: tries every permutation of the transactions that
// respects real-time order until one replays cleanly. Independent of the
// legality/graph pipeline above. Throws TooLargeHistory beyond the guards.
bool brute_force_opacity(const History& h, std::size_t max_methods = 12,
                         std::size_t max_txns = 6);

}  // namespace ostm
