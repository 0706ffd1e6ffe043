#include "ostm/rwstm.hpp"

#include <algorithm>
#include <cassert>

namespace ostm {

Timestamp RwStm::begin() {
  Timestamp t = ts_.next();
  std::unique_lock<std::shared_mutex> l(registry_mu_);
  registry_.emplace(t, std::make_unique<TxLog>(t));
  return t;
}

RwStm::Cell& RwStm::cell_for(CellId id) {
  {
    std::shared_lock<std::shared_mutex> l(cells_mu_);
    auto it = cells_.find(id);
    if (it != cells_.end()) return *it->second;
  }
  std::unique_lock<std::shared_mutex> l(cells_mu_);
  auto& slot = cells_[id];
  if (!slot) slot = std::make_unique<Cell>();
  return *slot;
}

RwStm::TxLog* RwStm::live_log(Timestamp t) const {
  std::shared_lock<std::shared_mutex> l(registry_mu_);
  auto it = registry_.find(t);
  if (it == registry_.end())
    throw std::logic_error("transaction " + std::to_string(t) +
                           " is not live");
  return it->second.get();
}

void RwStm::end_transaction(Timestamp t) {
  std::unique_lock<std::shared_mutex> l(registry_mu_);
  registry_.erase(t);
}

std::size_t RwStm::live_transactions() const {
  std::shared_lock<std::shared_mutex> l(registry_mu_);
  return registry_.size();
}

RwResult RwStm::read(Timestamp t, CellId id) {
  TxLog* log = live_log(t);
  if (auto it = log->write_set.find(id); it != log->write_set.end())
    return {it->second, OpStatus::Ok};
  if (auto it = log->read_set.find(id); it != log->read_set.end())
    return {it->second, OpStatus::Ok};
  Cell& cell = cell_for(id);
  Value v;
  {
    std::lock_guard<std::mutex> g(cell.latch);
    if (t < cell.max_write_ts) {
      // A younger transaction already overwrote this cell; reading now
      // would serialize us after it despite our older timestamp.
      end_transaction(t);
      return {kNil, OpStatus::Abort};
    }
    cell.max_read_ts = std::max(cell.max_read_ts, t);
    v = cell.value;
  }
  log->read_set.emplace(id, v);
  return {v, OpStatus::Ok};
}

OpStatus RwStm::write(Timestamp t, CellId id, const Value& v) {
  TxLog* log = live_log(t);
  log->write_set[id] = v;
  return OpStatus::Ok;
}

OpStatus RwStm::try_commit(Timestamp t) {
  TxLog* log = live_log(t);
  if (log->write_set.empty()) {
    // Reads were validated at read time; nothing to install.
    end_transaction(t);
    return OpStatus::Commit;
  }
  // std::map keeps the write set in ascending CellId order, which is the
  // global latch order.
  std::vector<std::pair<Cell*, const Value*>> cells;
  cells.reserve(log->write_set.size());
  for (const auto& [id, v] : log->write_set)
    cells.emplace_back(&cell_for(id), &v);
  for (auto& [cell, v] : cells) {
    (void)v;
    cell->latch.lock();
  }
  bool ok = true;
  for (auto& [cell, v] : cells) {
    (void)v;
    if (t < cell->max_read_ts || t < cell->max_write_ts) {
      ok = false;
      break;
    }
  }
  if (ok) {
    for (auto& [cell, v] : cells) {
      cell->value = *v;
      cell->max_write_ts = t;
    }
  }
  for (auto it = cells.rbegin(); it != cells.rend(); ++it)
    it->first->latch.unlock();
  end_transaction(t);
  return ok ? OpStatus::Commit : OpStatus::Abort;
}

OpStatus RwStm::try_abort(Timestamp t) {
  live_log(t);
  end_transaction(t);
  return OpStatus::Abort;
}

void RwStm::seed(CellId id, const Value& v) {
  Cell& cell = cell_for(id);
  std::lock_guard<std::mutex> g(cell.latch);
  cell.value = v;
}

Value RwStm::peek(CellId id) const {
  std::shared_lock<std::shared_mutex> l(cells_mu_);
  auto it = cells_.find(id);
  if (it == cells_.end()) return kNil;
  std::lock_guard<std::mutex> g(it->second->latch);
  return it->second->value;
}

namespace {
constexpr std::int64_t kHeadSpace = 0;
constexpr std::int64_t kLinkSpace = 1;
constexpr std::int64_t kPayloadSpace = 2;
}  // namespace

RwHashTable::RwHashTable(RwStm& stm, std::size_t buckets)
    : stm_(stm), buckets_(buckets) {
  assert(buckets_ > 0);
  for (std::size_t b = 0; b < buckets_; ++b)
    stm_.seed(head_cell(b), Value(kTailKey));  // empty chains
}

std::size_t RwHashTable::bucket_of(Key key) const {
  std::uint64_t h = static_cast<std::uint64_t>(key) * 0x9E3779B97F4A7C15ull;
  return (h >> 32) % buckets_;
}

CellId RwHashTable::head_cell(std::size_t bucket) const {
  return {kHeadSpace, static_cast<std::int64_t>(bucket)};
}
CellId RwHashTable::link_cell(Key key) const { return {kLinkSpace, key}; }
CellId RwHashTable::payload_cell(Key key) const {
  return {kPayloadSpace, key};
}

OpStatus RwHashTable::find_pred(Timestamp t, Key key, Pred* out) {
  CellId link = head_cell(bucket_of(key));
  for (;;) {
    RwResult r = stm_.read(t, link);
    if (r.status == OpStatus::Abort) return OpStatus::Abort;
    Key next = r.value.value_or(kTailKey);
    if (next >= key) {
      *out = {link, next};
      return OpStatus::Ok;
    }
    link = link_cell(next);
  }
}

OpStatus RwHashTable::insert(Timestamp t, Key key, const Value& value) {
  assert(is_user_key(key) && value.has_value());
  Pred pred;
  if (find_pred(t, key, &pred) == OpStatus::Abort) return OpStatus::Abort;
  if (pred.next_key == key) {
    stm_.write(t, payload_cell(key), value);
    return OpStatus::Ok;
  }
  stm_.write(t, link_cell(key), Value(pred.next_key));
  stm_.write(t, payload_cell(key), value);
  stm_.write(t, pred.link, Value(key));
  return OpStatus::Ok;
}

RwResult RwHashTable::lookup(Timestamp t, Key key) {
  assert(is_user_key(key));
  Pred pred;
  if (find_pred(t, key, &pred) == OpStatus::Abort)
    return {kNil, OpStatus::Abort};
  if (pred.next_key != key) return {kNil, OpStatus::Fail};
  RwResult r = stm_.read(t, payload_cell(key));
  if (r.status == OpStatus::Abort) return {kNil, OpStatus::Abort};
  return {r.value, OpStatus::Ok};
}

RwResult RwHashTable::erase(Timestamp t, Key key) {
  assert(is_user_key(key));
  Pred pred;
  if (find_pred(t, key, &pred) == OpStatus::Abort)
    return {kNil, OpStatus::Abort};
  if (pred.next_key != key) return {kNil, OpStatus::Fail};
  RwResult payload = stm_.read(t, payload_cell(key));
  if (payload.status == OpStatus::Abort) return {kNil, OpStatus::Abort};
  RwResult next = stm_.read(t, link_cell(key));
  if (next.status == OpStatus::Abort) return {kNil, OpStatus::Abort};
  stm_.write(t, pred.link, next.value);
  return {payload.value, OpStatus::Ok};
}

std::vector<Key> RwHashTable::resident_keys() const {
  std::vector<Key> out;
  for (std::size_t b = 0; b < buckets_; ++b) {
    Key k = stm_.peek(head_cell(b)).value_or(kTailKey);
    while (k != kTailKey) {
      out.push_back(k);
      k = stm_.peek(link_cell(k)).value_or(kTailKey);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ostm
