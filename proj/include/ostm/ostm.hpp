#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "ostm/history.hpp"
#include "ostm/lazyrb_list.hpp"

namespace ostm {

struct OstmConfig {
  std::size_t buckets = 5;
  // Deletes that already failed in their shared-memory phase behave like
  // lookups: they are not revalidated or reapplied at commit.
  bool failed_delete_skip = true;
  // See SearchOptions::time_order_on_retry.
  bool time_order_on_retry = false;
};

// Deferred update/read of one transaction on one (object, key).
struct LogEntry {
  ObjId obj = 0;
  Key key = 0;
  Value value;          // insert payload / observed lookup value; nil for delete
  OpName opn = OpName::Lookup;
  OpStatus status = OpStatus::Ok;
  Location loc;         // latest latched neighbourhood
  Node* created = nullptr;  // node spliced on this entry's behalf, if any
};

struct TxNotLive : std::logic_error {
  explicit TxNotLive(Timestamp t)
      : std::logic_error("transaction " + std::to_string(t) +
                         " is not live") {}
};

using LookupResult = OpResult;

// Transactional hash table of sorted red/blue lists. Lookups and deletes
// validate against shared memory when first touching a key; inserts are
// purely local until commit; try_commit revalidates and applies all updates
// under per-neighbourhood latches.
//
// Each transaction is driven by a single thread. Once a method returns
// Abort (or commit/abort succeeds) the transaction is gone; further methods
// on its id throw TxNotLive.
class Ostm {
 public:
  explicit Ostm(OstmConfig cfg = {});
  ~Ostm();
  Ostm(const Ostm&) = delete;
  Ostm& operator=(const Ostm&) = delete;

  // Attach before running transactions; records every method with its
  // effect point. Pass nullptr to detach.
  void set_recorder(HistoryRecorder* recorder) { recorder_ = recorder; }

  Timestamp begin();
  OpStatus insert(Timestamp t, ObjId obj, Key key, const Value& value);
  LookupResult lookup(Timestamp t, ObjId obj, Key key);
  LookupResult erase(Timestamp t, ObjId obj, Key key);
  OpStatus try_commit(Timestamp t);   // Commit or Abort
  OpStatus try_abort(Timestamp t);    // always Abort

  // Copy of the transaction's log entry for (obj, key), if one exists.
  std::optional<LogEntry> find_logged(Timestamp t, ObjId obj, Key key) const;

  std::size_t live_transactions() const;
  const OstmConfig& config() const { return cfg_; }
  std::size_t bucket_of(Key key) const;

  // Quiescent inspection across an object's buckets (sorted by key).
  std::vector<Key> blue_keys(ObjId obj) const;
  std::vector<Key> red_keys(ObjId obj) const;
  std::vector<RblList::NodeStats> node_stats(ObjId obj) const;
  bool check_invariants(ObjId obj, std::string* why = nullptr) const;

 private:
  struct TxLog;
  struct Table;

  Table& table_for(ObjId obj);
  const Table* table_if_exists(ObjId obj) const;
  TxLog* live_log(Timestamp t) const;
  void end_transaction(Timestamp t);

  struct RvOutcome {
    Value value;
    OpStatus status = OpStatus::Abort;
    std::uint64_t lp = 0;
    Location loc;
    Node* created = nullptr;
  };
  RvOutcome shared_read(TxLog* log, ObjId obj, Key key);

  std::uint64_t seq();
  void record(Timestamp t, MethodKind kind, ObjId obj, std::optional<Key> key,
              const Value& value, OpStatus st, std::uint64_t inv,
              std::uint64_t lp);

  OstmConfig cfg_;
  SearchOptions search_opts_;
  TimestampSource ts_;
  HistoryRecorder* recorder_ = nullptr;

  mutable std::shared_mutex objects_mu_;
  std::map<ObjId, std::unique_ptr<Table>> objects_;

  mutable std::shared_mutex registry_mu_;
  std::map<Timestamp, std::unique_ptr<TxLog>> registry_;
};

}  // namespace ostm
