#include "ostm/ostm.hpp"

#include <algorithm>
#include <cassert>
#include <tuple>

namespace ostm {

struct Ostm::TxLog {
  explicit TxLog(Timestamp id) : t_id(id) {}
  const Timestamp t_id;
  std::map<std::pair<ObjId, Key>, LogEntry> entries;
  LatchSet latches;
};

struct Ostm::Table {
  explicit Table(std::size_t nbuckets) {
    buckets.reserve(nbuckets);
    for (std::size_t i = 0; i < nbuckets; ++i)
      buckets.push_back(std::make_unique<RblList>());
  }
  std::vector<std::unique_ptr<RblList>> buckets;
};

Ostm::Ostm(OstmConfig cfg) : cfg_(cfg) {
  assert(cfg_.buckets > 0);
  search_opts_.time_order_on_retry = cfg_.time_order_on_retry;
}

Ostm::~Ostm() = default;

std::size_t Ostm::bucket_of(Key key) const {
  std::uint64_t h = static_cast<std::uint64_t>(key) * 0x9E3779B97F4A7C15ull;
  return (h >> 32) % cfg_.buckets;
}

Ostm::Table& Ostm::table_for(ObjId obj) {
  {
    std::shared_lock<std::shared_mutex> l(objects_mu_);
    auto it = objects_.find(obj);
    if (it != objects_.end()) return *it->second;
  }
  std::unique_lock<std::shared_mutex> l(objects_mu_);
  auto& slot = objects_[obj];
  if (!slot) slot = std::make_unique<Table>(cfg_.buckets);
  return *slot;
}

const Ostm::Table* Ostm::table_if_exists(ObjId obj) const {
  std::shared_lock<std::shared_mutex> l(objects_mu_);
  auto it = objects_.find(obj);
  return it == objects_.end() ? nullptr : it->second.get();
}

Ostm::TxLog* Ostm::live_log(Timestamp t) const {
  std::shared_lock<std::shared_mutex> l(registry_mu_);
  auto it = registry_.find(t);
  if (it == registry_.end()) throw TxNotLive(t);
  return it->second.get();
}

void Ostm::end_transaction(Timestamp t) {
  std::unique_lock<std::shared_mutex> l(registry_mu_);
  registry_.erase(t);
}

std::size_t Ostm::live_transactions() const {
  std::shared_lock<std::shared_mutex> l(registry_mu_);
  return registry_.size();
}

std::uint64_t Ostm::seq() {
  return recorder_ ? recorder_->next_seq() : 0;
}

void Ostm::record(Timestamp t, MethodKind kind, ObjId obj,
                  std::optional<Key> key, const Value& value, OpStatus st,
                  std::uint64_t inv, std::uint64_t lp) {
  if (!recorder_) return;
  MethodRecord r;
  r.t_id = t;
  r.kind = kind;
  r.obj = obj;
  r.key = key;
  r.value = value;
  r.status = st;
  r.inv_seq = inv;
  r.lp_seq = lp;
  r.rsp_seq = recorder_->next_seq();
  recorder_->append(std::move(r));
}

Timestamp Ostm::begin() {
  std::uint64_t inv = seq();
  Timestamp t = ts_.next();
  std::uint64_t lp = seq();  // effect point: the counter fetch
  {
    std::unique_lock<std::shared_mutex> l(registry_mu_);
    registry_.emplace(t, std::make_unique<TxLog>(t));
  }
  record(t, MethodKind::Begin, 0, std::nullopt, kNil, OpStatus::Ok, inv, lp);
  return t;
}

OpStatus Ostm::insert(Timestamp t, ObjId obj, Key key, const Value& value) {
  assert(is_user_key(key));
  assert(value.has_value());
  TxLog* log = live_log(t);
  std::uint64_t inv = seq();
  LogEntry& e = log->entries[{obj, key}];
  e.obj = obj;
  e.key = key;
  e.value = value;
  e.opn = OpName::Insert;
  e.status = OpStatus::Ok;
  std::uint64_t lp = seq();  // effect point: the local log write
  record(t, MethodKind::Insert, obj, key, value, OpStatus::Ok, inv, lp);
  return OpStatus::Ok;
}

Ostm::RvOutcome Ostm::shared_read(TxLog* log, ObjId obj, Key key) {
  Table& table = table_for(obj);
  RblList& bucket = *table.buckets[bucket_of(key)];
  SearchResult res = bucket.search(log->t_id, key, ValidationType::Rv,
                                   log->latches, search_opts_);
  RvOutcome out;
  if (res.status == OpStatus::Abort) {
    out.status = OpStatus::Abort;
    out.value = kNil;
    out.lp = seq();  // abort decision point
    return out;
  }
  const Location& loc = res.loc;
  out.loc = loc;
  if (loc.blue_curr->key == key) {
    stamp(loc.blue_curr->max_ts.lookup_ts, log->t_id);
    out.value = loc.blue_curr->value;
    out.status = OpStatus::Ok;
  } else if (loc.red_curr->key == key) {
    // Key was deleted: its dead node still carries the timestamps.
    stamp(loc.red_curr->max_ts.lookup_ts, log->t_id);
    out.value = kNil;
    out.status = OpStatus::Fail;
  } else {
    // Absent key: leave a dead node behind so later transactions order
    // themselves against this read.
    out.created =
        bucket.splice(loc, key, kNil, SpliceMode::RedOnly, log->latches);
    stamp(out.created->max_ts.lookup_ts, log->t_id);
    out.value = kNil;
    out.status = OpStatus::Fail;
  }
  out.lp = seq();  // effect point: still latched
  log->latches.release(loc);
  return out;
}

LookupResult Ostm::lookup(Timestamp t, ObjId obj, Key key) {
  assert(is_user_key(key));
  TxLog* log = live_log(t);
  std::uint64_t inv = seq();
  Value value;
  OpStatus st;
  std::uint64_t lp;
  auto it = log->entries.find({obj, key});
  if (it != log->entries.end()) {
    // Read over the transaction's own log; shared memory is not consulted
    // and the entry is left untouched.
    const LogEntry& e = it->second;
    if (e.opn == OpName::Delete) {
      value = kNil;
      st = OpStatus::Fail;
    } else {
      value = e.value;
      st = e.status;
    }
    lp = seq();
  } else {
    RvOutcome rv = shared_read(log, obj, key);
    lp = rv.lp;
    if (rv.status == OpStatus::Abort) {
      end_transaction(t);
      record(t, MethodKind::Lookup, obj, key, kNil, OpStatus::Abort, inv, lp);
      return {kNil, OpStatus::Abort};
    }
    value = rv.value;
    st = rv.status;
    LogEntry e;
    e.obj = obj;
    e.key = key;
    e.value = value;
    e.opn = OpName::Lookup;
    e.status = st;
    e.loc = rv.loc;
    e.created = rv.created;
    log->entries.emplace(std::pair{obj, key}, e);
  }
  record(t, MethodKind::Lookup, obj, key, value, st, inv, lp);
  return {value, st};
}

LookupResult Ostm::erase(Timestamp t, ObjId obj, Key key) {
  assert(is_user_key(key));
  TxLog* log = live_log(t);
  std::uint64_t inv = seq();
  Value ret;
  OpStatus st;
  std::uint64_t lp;
  auto it = log->entries.find({obj, key});
  if (it != log->entries.end()) {
    LogEntry& e = it->second;
    switch (e.opn) {
      case OpName::Insert:
        ret = e.value;
        st = OpStatus::Ok;
        e.opn = OpName::Delete;
        e.value = kNil;
        e.status = OpStatus::Ok;
        break;
      case OpName::Delete:
        // Already deleted locally; report failure, keep the entry as is.
        ret = kNil;
        st = OpStatus::Fail;
        break;
      case OpName::Lookup:
      default:
        ret = e.value;
        st = e.status;  // delete inherits what the lookup observed
        e.opn = OpName::Delete;
        e.value = kNil;
        break;
    }
    lp = seq();
  } else {
    RvOutcome rv = shared_read(log, obj, key);
    lp = rv.lp;
    if (rv.status == OpStatus::Abort) {
      end_transaction(t);
      record(t, MethodKind::Delete, obj, key, kNil, OpStatus::Abort, inv, lp);
      return {kNil, OpStatus::Abort};
    }
    ret = rv.value;
    st = rv.status;
    LogEntry e;
    e.obj = obj;
    e.key = key;
    e.value = kNil;
    e.opn = OpName::Delete;
    e.status = st;
    e.loc = rv.loc;
    e.created = rv.created;
    log->entries.emplace(std::pair{obj, key}, e);
  }
  record(t, MethodKind::Delete, obj, key, ret, st, inv, lp);
  return {ret, st};
}

OpStatus Ostm::try_commit(Timestamp t) {
  TxLog* log = live_log(t);
  std::uint64_t inv = seq();

  std::vector<LogEntry*> updates;
  for (auto& [ok, e] : log->entries) {
    (void)ok;
    if (e.opn == OpName::Insert) {
      updates.push_back(&e);
    } else if (e.opn == OpName::Delete &&
               !(cfg_.failed_delete_skip && e.status == OpStatus::Fail)) {
      updates.push_back(&e);
    }
  }
  // Latch order: objects ascending, buckets ascending within an object, keys
  // ascending within a bucket. Distinct buckets are disjoint lists, so with
  // per-bucket neighbourhoods latched in key order this is a global order.
  std::sort(updates.begin(), updates.end(),
            [this](const LogEntry* a, const LogEntry* b) {
              return std::tuple(a->obj, bucket_of(a->key), a->key) <
                     std::tuple(b->obj, bucket_of(b->key), b->key);
            });

  if (!updates.empty()) {
    // Phase 1: relatch and revalidate every update's neighbourhood. All
    // latches stay held until the commit finishes.
    for (LogEntry* e : updates) {
      Table& table = table_for(e->obj);
      RblList& bucket = *table.buckets[bucket_of(e->key)];
      SearchResult res = bucket.search(t, e->key, ValidationType::TryC,
                                       log->latches, search_opts_);
      if (res.status == OpStatus::Abort) {
        log->latches.release_all();
        std::uint64_t lp = seq();
        end_transaction(t);
        record(t, MethodKind::TryCommit, 0, std::nullopt, kNil,
               OpStatus::Abort, inv, lp);
        return OpStatus::Abort;
      }
      e->loc = res.loc;
    }

    // Phase 2: apply. An earlier update of this very transaction may have
    // rewired a later entry's neighbourhood; repair against the nearest
    // preceding update in the same bucket (same-bucket entries are
    // contiguous after the sort).
    for (std::size_t i = 0; i < updates.size(); ++i) {
      LogEntry* e = updates[i];
      if (i > 0 && updates[i - 1]->obj == e->obj &&
          bucket_of(updates[i - 1]->key) == bucket_of(e->key)) {
        e->loc = RblList::repair_location(
            e->loc, updates[i - 1]->loc,
            updates[i - 1]->opn == OpName::Insert, updates[i - 1]->key,
            log->latches);
      }
      Table& table = table_for(e->obj);
      RblList& bucket = *table.buckets[bucket_of(e->key)];
      if (e->opn == OpName::Insert) {
        if (e->loc.blue_curr->key == e->key) {
          e->loc.blue_curr->value = e->value;
          stamp(e->loc.blue_curr->max_ts.insert_ts, t);
        } else if (e->loc.red_curr->key == e->key) {
          Node* n = bucket.splice(e->loc, e->key, e->value,
                                  SpliceMode::PromoteToBlue, log->latches);
          stamp(n->max_ts.insert_ts, t);
        } else {
          e->created = bucket.splice(e->loc, e->key, e->value,
                                     SpliceMode::FreshBoth, log->latches);
          stamp(e->created->max_ts.insert_ts, t);
        }
      } else {
        if (e->loc.blue_curr->key == e->key) {
          RblList::unlink_blue(e->loc);
          stamp(e->loc.blue_curr->max_ts.delete_ts, t);
        }
        // Otherwise the key is already gone; nothing to unlink.
      }
    }
  }

  std::uint64_t lp = seq();  // effect point: everything applied, still latched
  log->latches.release_all();
  end_transaction(t);
  record(t, MethodKind::TryCommit, 0, std::nullopt, kNil, OpStatus::Commit,
         inv, lp);
  return OpStatus::Commit;
}

OpStatus Ostm::try_abort(Timestamp t) {
  live_log(t);  // throws if unknown
  std::uint64_t inv = seq();
  std::uint64_t lp = seq();
  end_transaction(t);
  record(t, MethodKind::TryAbort, 0, std::nullopt, kNil, OpStatus::Abort, inv,
         lp);
  return OpStatus::Abort;
}

std::optional<LogEntry> Ostm::find_logged(Timestamp t, ObjId obj,
                                          Key key) const {
  TxLog* log = live_log(t);
  auto it = log->entries.find({obj, key});
  if (it == log->entries.end()) return std::nullopt;
  return it->second;
}

std::vector<Key> Ostm::blue_keys(ObjId obj) const {
  std::vector<Key> out;
  if (const Table* table = table_if_exists(obj)) {
    for (const auto& bucket : table->buckets) {
      auto keys = bucket->blue_keys();
      out.insert(out.end(), keys.begin(), keys.end());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Key> Ostm::red_keys(ObjId obj) const {
  std::vector<Key> out;
  if (const Table* table = table_if_exists(obj)) {
    for (const auto& bucket : table->buckets) {
      auto keys = bucket->red_keys();
      out.insert(out.end(), keys.begin(), keys.end());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RblList::NodeStats> Ostm::node_stats(ObjId obj) const {
  std::vector<RblList::NodeStats> out;
  if (const Table* table = table_if_exists(obj)) {
    for (const auto& bucket : table->buckets) {
      auto stats = bucket->node_stats();
      out.insert(out.end(), stats.begin(), stats.end());
    }
  }
  return out;
}

bool Ostm::check_invariants(ObjId obj, std::string* why) const {
  const Table* table = table_if_exists(obj);
  if (table == nullptr) return true;
  for (std::size_t b = 0; b < table->buckets.size(); ++b) {
    if (!table->buckets[b]->check_invariants(why)) return false;
    for (Key k : table->buckets[b]->red_keys()) {
      if (bucket_of(k) != b) {
        if (why)
          *why = "key " + std::to_string(k) + " in wrong bucket " +
                 std::to_string(b);
        return false;
      }
    }
  }
  return true;
}

}  // namespace ostm
