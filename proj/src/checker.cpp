#include "ostm/checker.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace ostm {

namespace {

struct TxnView {
  Timestamp id = 0;
  std::vector<const MethodRecord*> methods;  // lp order
  bool committed = false;
  bool aborted = false;
  std::uint64_t commit_lp = 0;
  std::uint64_t first_inv = UINT64_MAX;
  std::uint64_t last_rsp = 0;
};

std::map<Timestamp, TxnView> collect(const History& h) {
  std::string why;
  if (!h.well_formed(&why)) throw MalformedHistory(why);
  std::map<Timestamp, TxnView> txns;
  for (const MethodRecord& r : h.records()) {
    TxnView& t = txns[r.t_id];
    t.id = r.t_id;
    t.methods.push_back(&r);
    t.first_inv = std::min(t.first_inv, r.inv_seq);
    t.last_rsp = std::max(t.last_rsp, r.rsp_seq);
    if (r.kind == MethodKind::TryCommit && r.status == OpStatus::Commit) {
      t.committed = true;
      t.commit_lp = r.lp_seq;
    } else if (r.kind == MethodKind::TryAbort || r.status == OpStatus::Abort) {
      t.aborted = true;
    }
  }
  // Completion: a transaction still running at the end counts as aborted.
  for (auto& [id, t] : txns) {
    (void)id;
    if (!t.committed && !t.aborted) t.aborted = true;
  }
  return txns;
}

// The per-transaction view of one (obj, key) after some of its methods.
struct LocalEntry {
  OpName opn = OpName::Lookup;
  Value value;
  OpStatus status = OpStatus::Ok;
};

// Expected return of a lookup or delete over an existing local entry.
std::pair<Value, OpStatus> local_read(const LocalEntry& e) {
  switch (e.opn) {
    case OpName::Insert: return {e.value, OpStatus::Ok};
    case OpName::Lookup: return {e.value, e.status};
    case OpName::Delete: return {kNil, OpStatus::Fail};
  }
  return {kNil, OpStatus::Fail};
}

void merge_delete(LocalEntry& e) {
  switch (e.opn) {
    case OpName::Insert:
      e = {OpName::Delete, kNil, OpStatus::Ok};
      break;
    case OpName::Lookup:
      e = {OpName::Delete, kNil, e.status};
      break;
    case OpName::Delete:
      break;  // a failed re-delete leaves the entry alone
  }
}

using KeyId = std::pair<ObjId, Key>;

bool is_read_kind(MethodKind k) {
  return k == MethodKind::Lookup || k == MethodKind::Delete;
}

bool is_method_kind(MethodKind k) {
  return k == MethodKind::Lookup || k == MethodKind::Insert ||
         k == MethodKind::Delete;
}

}  // namespace

const char* to_string(EdgeType t) {
  switch (t) {
    case EdgeType::TryCTryC: return "tryc-tryc";
    case EdgeType::TryCRv: return "tryc-rv";
    case EdgeType::RvTryC: return "rv-tryc";
    case EdgeType::RealTime: return "real-time";
  }
  return "?";
}

std::optional<LegalityViolation> check_legality(const History& h) {
  auto txns = collect(h);
  (void)txns;

  struct SharedCell {
    bool present = false;
    Value value;
    std::uint64_t update_lp = 0;  // commit that last changed the cell
  };
  std::map<KeyId, SharedCell> shared;
  std::map<Timestamp, std::map<KeyId, LocalEntry>> locals;

  for (const MethodRecord& r : h.records()) {
    if (r.status == OpStatus::Abort) continue;  // no return to constrain
    if (r.kind == MethodKind::Begin || r.kind == MethodKind::TryAbort)
      continue;
    if (r.kind == MethodKind::TryCommit) {
      if (r.status != OpStatus::Commit) continue;
      for (const auto& [kid, e] : locals[r.t_id]) {
        if (e.opn == OpName::Insert) {
          shared[kid] = {true, e.value, r.lp_seq};
        } else if (e.opn == OpName::Delete && e.status == OpStatus::Ok) {
          shared[kid] = {false, kNil, r.lp_seq};
        }
        // Deletes that observed an absent key are reads, not updates.
      }
      continue;
    }

    KeyId kid{r.obj, *r.key};
    auto& local = locals[r.t_id];
    auto it = local.find(kid);

    if (r.kind == MethodKind::Insert) {
      local[kid] = {OpName::Insert, r.value, OpStatus::Ok};
      continue;
    }

    // Lookup or delete with a completed return.
    Value expect_v;
    OpStatus expect_s;
    std::uint64_t clash_lp = 0;
    if (it != local.end()) {
      std::tie(expect_v, expect_s) = local_read(it->second);
      if (r.value != expect_v || r.status != expect_s) {
        std::ostringstream os;
        os << to_string(r.kind) << " of transaction " << r.t_id << " on key "
           << *r.key << " disagrees with the transaction's own log";
        return LegalityViolation{r.lp_seq, 0, os.str()};
      }
    } else {
      const SharedCell* cell = nullptr;
      if (auto sit = shared.find(kid); sit != shared.end())
        cell = &sit->second;
      bool present = cell != nullptr && cell->present;
      expect_v = present ? cell->value : kNil;
      expect_s = present ? OpStatus::Ok : OpStatus::Fail;
      clash_lp = cell != nullptr ? cell->update_lp : 0;
      if (r.value != expect_v || r.status != expect_s) {
        std::ostringstream os;
        os << to_string(r.kind) << " of transaction " << r.t_id << " on key "
           << *r.key << " returned ("
           << (r.value ? std::to_string(*r.value) : "nil") << ", "
           << to_string(r.status) << ") but the nearest committed update "
           << (clash_lp == 0 ? "is the initial empty state"
                             : "committed at lp " + std::to_string(clash_lp))
           << " implies (" << (expect_v ? std::to_string(*expect_v) : "nil")
           << ", " << to_string(expect_s) << ")";
        return LegalityViolation{r.lp_seq, clash_lp, os.str()};
      }
    }

    // Fold the method into the transaction's view.
    if (it == local.end()) {
      if (r.kind == MethodKind::Lookup)
        local[kid] = {OpName::Lookup, expect_v, expect_s};
      else
        local[kid] = {OpName::Delete, kNil, expect_s};
    } else if (r.kind == MethodKind::Delete) {
      merge_delete(it->second);
    }
    // A lookup over an existing entry leaves it untouched.
  }
  return std::nullopt;
}

std::vector<ConflictEdge> find_conflicts(const History& h) {
  auto txns = collect(h);

  struct Access {
    Timestamp txn;
    std::uint64_t lp;
  };
  std::map<KeyId, std::vector<Access>> readers;
  std::map<KeyId, std::vector<Access>> updaters;

  for (auto& [id, t] : txns) {
    std::map<KeyId, const MethodRecord*> first_on_key;
    std::map<KeyId, LocalEntry> local;
    for (const MethodRecord* r : t.methods) {
      if (!is_method_kind(r->kind)) continue;
      KeyId kid{r->obj, *r->key};
      if (!first_on_key.count(kid)) first_on_key[kid] = r;
      if (r->status == OpStatus::Abort) break;
      auto it = local.find(kid);
      if (r->kind == MethodKind::Insert) {
        local[kid] = {OpName::Insert, r->value, OpStatus::Ok};
      } else if (it == local.end()) {
        if (r->kind == MethodKind::Lookup)
          local[kid] = {OpName::Lookup, r->value, r->status};
        else
          local[kid] = {OpName::Delete, kNil, r->status};
      } else if (r->kind == MethodKind::Delete) {
        merge_delete(it->second);
      }
    }
    // A transaction reads (obj, key) iff its first method there is a lookup
    // or delete that completed; later methods on the key work over the log.
    for (const auto& [kid, r] : first_on_key) {
      if (is_read_kind(r->kind) &&
          (r->status == OpStatus::Ok || r->status == OpStatus::Fail)) {
        readers[kid].push_back({id, r->lp_seq});
      }
    }
    // A committed transaction updates (obj, key) iff its folded entry is an
    // insert or a delete that observed the key present.
    if (t.committed) {
      for (const auto& [kid, e] : local) {
        if (e.opn == OpName::Insert ||
            (e.opn == OpName::Delete && e.status == OpStatus::Ok)) {
          updaters[kid].push_back({id, t.commit_lp});
        }
      }
    }
  }

  std::set<std::tuple<Timestamp, Timestamp, EdgeType, ObjId, Key>> seen;
  std::vector<ConflictEdge> edges;
  auto add = [&](Timestamp from, Timestamp to, EdgeType type, ObjId obj,
                 Key key) {
    if (from == to) return;
    if (seen.insert({from, to, type, obj, key}).second)
      edges.push_back({from, to, type, obj, key});
  };

  for (const auto& [kid, us] : updaters) {
    for (const Access& u1 : us) {
      for (const Access& u2 : us) {
        if (u1.lp < u2.lp)
          add(u1.txn, u2.txn, EdgeType::TryCTryC, kid.first, kid.second);
      }
    }
    auto rit = readers.find(kid);
    if (rit == readers.end()) continue;
    for (const Access& u : us) {
      for (const Access& rd : rit->second) {
        if (u.txn == rd.txn) continue;
        if (u.lp < rd.lp)
          add(u.txn, rd.txn, EdgeType::TryCRv, kid.first, kid.second);
        else
          add(rd.txn, u.txn, EdgeType::RvTryC, kid.first, kid.second);
      }
    }
  }

  for (const auto& [from, to] : real_time_order(h)) {
    add(from, to, EdgeType::RealTime, 0, 0);
  }
  return edges;
}

ConflictGraph build_conflict_graph(const History& h) {
  ConflictGraph g;
  for (const auto& [id, t] : collect(h)) {
    (void)t;
    g.vertices.push_back(id);
  }
  g.edges = find_conflicts(h);
  return g;
}

std::optional<std::vector<Timestamp>> topological_serialize(
    const ConflictGraph& g, std::vector<Timestamp>* cycle) {
  std::map<Timestamp, std::set<Timestamp>> succ;
  std::map<Timestamp, std::set<Timestamp>> pred;
  std::map<Timestamp, int> indeg;
  for (Timestamp v : g.vertices) indeg[v] = 0;
  for (const ConflictEdge& e : g.edges) {
    if (e.from == e.to) continue;
    assert(indeg.count(e.from) && indeg.count(e.to));
    if (succ[e.from].insert(e.to).second) {
      pred[e.to].insert(e.from);
      ++indeg[e.to];
    }
  }

  std::priority_queue<Timestamp, std::vector<Timestamp>,
                      std::greater<Timestamp>>
      ready;
  for (const auto& [v, d] : indeg) {
    if (d == 0) ready.push(v);
  }
  std::vector<Timestamp> order;
  while (!ready.empty()) {
    Timestamp v = ready.top();
    ready.pop();
    order.push_back(v);
    for (Timestamp w : succ[v]) {
      if (--indeg[w] == 0) ready.push(w);
    }
  }
  if (order.size() == indeg.size()) return order;

  if (cycle != nullptr) {
    // Every leftover vertex keeps a leftover predecessor; walk predecessors
    // until one repeats, then report the loop in forward direction.
    std::set<Timestamp> left;
    for (const auto& [v, d] : indeg) {
      if (d > 0) left.insert(v);
    }
    std::vector<Timestamp> path;
    std::map<Timestamp, std::size_t> pos;
    Timestamp v = *left.begin();
    while (!pos.count(v)) {
      pos[v] = path.size();
      path.push_back(v);
      Timestamp next = v;
      for (Timestamp p : pred[v]) {
        if (left.count(p)) {
          next = p;
          break;
        }
      }
      assert(next != v);
      v = next;
    }
    cycle->assign(path.begin() + pos[v], path.end());
    std::reverse(cycle->begin(), cycle->end());
  }
  return std::nullopt;
}

Verdict check_co_opacity(const History& h) {
  Verdict v;
  v.violation = check_legality(h);
  v.edges = find_conflicts(h);
  if (v.violation.has_value()) {
    v.legal = false;
    v.co_opaque = false;
    return v;
  }
  v.legal = true;
  ConflictGraph g = build_conflict_graph(h);
  std::vector<Timestamp> cycle;
  if (auto order = topological_serialize(g, &cycle)) {
    v.co_opaque = true;
    v.witness = std::move(*order);
  } else {
    v.co_opaque = false;
    v.cycle = std::move(cycle);
  }
  return v;
}

bool replay_matches(const History& h, const std::vector<Timestamp>& order) {
  auto txns = collect(h);
  if (order.size() != txns.size()) return false;
  {
    std::set<Timestamp> ids(order.begin(), order.end());
    if (ids.size() != order.size()) return false;
    for (const auto& [id, t] : txns) {
      (void)t;
      if (!ids.count(id)) return false;
    }
  }

  std::map<KeyId, Value> present;
  for (Timestamp id : order) {
    const TxnView& t = txns.at(id);
    std::map<KeyId, LocalEntry> local;
    for (const MethodRecord* r : t.methods) {
      if (!is_method_kind(r->kind)) continue;
      if (r->status == OpStatus::Abort) break;  // nothing to reproduce
      KeyId kid{r->obj, *r->key};
      auto it = local.find(kid);
      if (r->kind == MethodKind::Insert) {
        local[kid] = {OpName::Insert, r->value, OpStatus::Ok};
        continue;
      }
      Value expect_v;
      OpStatus expect_s;
      if (it != local.end()) {
        std::tie(expect_v, expect_s) = local_read(it->second);
      } else {
        auto sit = present.find(kid);
        if (sit != present.end()) {
          expect_v = sit->second;
          expect_s = OpStatus::Ok;
        } else {
          expect_v = kNil;
          expect_s = OpStatus::Fail;
        }
      }
      if (r->value != expect_v || r->status != expect_s) return false;
      if (it == local.end()) {
        if (r->kind == MethodKind::Lookup)
          local[kid] = {OpName::Lookup, expect_v, expect_s};
        else
          local[kid] = {OpName::Delete, kNil, expect_s};
      } else if (r->kind == MethodKind::Delete) {
        merge_delete(it->second);
      }
    }
    if (t.committed) {
      for (const auto& [kid, e] : local) {
        if (e.opn == OpName::Insert) {
          present[kid] = e.value;
        } else if (e.opn == OpName::Delete && e.status == OpStatus::Ok) {
          present.erase(kid);
        }
      }
    }
  }
  return true;
}

bool brute_force_opacity(const History& h, std::size_t max_methods,
                         std::size_t max_txns) {
  auto txns = collect(h);
  if (txns.size() > max_txns)
    throw TooLargeHistory(std::to_string(txns.size()) + " transactions");
  std::size_t methods = 0;
  for (const MethodRecord& r : h.records()) {
    if (is_method_kind(r.kind)) ++methods;
  }
  if (methods > max_methods)
    throw TooLargeHistory(std::to_string(methods) + " methods");

  std::vector<Timestamp> ids;
  for (const auto& [id, t] : txns) {
    (void)t;
    ids.push_back(id);
  }
  auto rt = real_time_order(h);

  std::sort(ids.begin(), ids.end());
  do {
    std::map<Timestamp, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
    bool rt_ok = true;
    for (const auto& [a, b] : rt) {
      if (pos[a] > pos[b]) {
        rt_ok = false;
        break;
      }
    }
    if (rt_ok && replay_matches(h, ids)) return true;
  } while (std::next_permutation(ids.begin(), ids.end()));
  return false;
}

}  // namespace ostm
