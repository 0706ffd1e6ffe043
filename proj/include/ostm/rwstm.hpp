#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include "ostm/core.hpp"

namespace ostm {

// Address of one transactional cell: a small space id plus an index within
// it. Spaces keep unrelated cell families (list links, payloads, bucket
// heads) apart.
struct CellId {
  std::int64_t space = 0;
  std::int64_t index = 0;
  auto operator<=>(const CellId&) const = default;
};

using RwResult = OpResult;

// Word-granularity STM with basic timestamp ordering. A read aborts when a
// younger transaction already overwrote the cell; a commit aborts when a
// younger transaction already read or overwrote any cell in the write set.
// Writes are buffered and installed atomically at commit under per-cell
// latches taken in ascending CellId order.
class RwStm {
 public:
  RwStm() = default;
  RwStm(const RwStm&) = delete;
  RwStm& operator=(const RwStm&) = delete;

  Timestamp begin();
  RwResult read(Timestamp t, CellId cell);
  OpStatus write(Timestamp t, CellId cell, const Value& v);  // always Ok
  OpStatus try_commit(Timestamp t);  // Commit or Abort
  OpStatus try_abort(Timestamp t);   // always Abort

  // Pre-concurrency initialization and quiescent inspection.
  void seed(CellId cell, const Value& v);
  Value peek(CellId cell) const;

  std::size_t live_transactions() const;

 private:
  struct Cell {
    std::mutex latch;
    Value value;  // guarded by latch
    Timestamp max_read_ts = 0;
    Timestamp max_write_ts = 0;
  };
  struct TxLog {
    explicit TxLog(Timestamp id) : t_id(id) {}
    const Timestamp t_id;
    std::map<CellId, Value> read_set;   // first-read cache
    std::map<CellId, Value> write_set;  // deferred stores
  };

  Cell& cell_for(CellId id);
  TxLog* live_log(Timestamp t) const;
  void end_transaction(Timestamp t);

  TimestampSource ts_;
  mutable std::shared_mutex cells_mu_;
  std::map<CellId, std::unique_ptr<Cell>> cells_;
  mutable std::shared_mutex registry_mu_;
  std::map<Timestamp, std::unique_ptr<TxLog>> registry_;
};

// Hash table layered over RwStm. Each bucket is a sorted singly linked list
// encoded in cells: a head cell per bucket and, per key, a link cell naming
// the next key and a payload cell. Operations traverse the chain with
// transactional reads, so structurally overlapping transactions conflict at
// the cell level even when their keys differ.
class RwHashTable {
 public:
  RwHashTable(RwStm& stm, std::size_t buckets);

  Timestamp begin() { return stm_.begin(); }
  OpStatus try_commit(Timestamp t) { return stm_.try_commit(t); }
  OpStatus try_abort(Timestamp t) { return stm_.try_abort(t); }

  OpStatus insert(Timestamp t, Key key, const Value& value);
  RwResult lookup(Timestamp t, Key key);
  RwResult erase(Timestamp t, Key key);

  std::size_t bucket_of(Key key) const;
  std::vector<Key> resident_keys() const;  // quiescent scan

 private:
  struct Pred {
    CellId link;   // cell whose value names the successor key
    Key next_key;  // that successor (kTailKey when none)
  };
  // Walks the bucket's chain to the last link before `key`. Returns Abort
  // in `status` if a transactional read aborted.
  OpStatus find_pred(Timestamp t, Key key, Pred* out);

  CellId head_cell(std::size_t bucket) const;
  CellId link_cell(Key key) const;
  CellId payload_cell(Key key) const;

  RwStm& stm_;
  std::size_t buckets_;
};

}  // namespace ostm
