#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "ostm/core.hpp"

namespace ostm {

// Largest transaction timestamp that performed each kind of method on a
// node. Fields only ever grow (stamp() takes a max), which is what the
// time-order validation relies on.
struct MaxTsTriple {
  std::atomic<Timestamp> lookup_ts{0};
  std::atomic<Timestamp> insert_ts{0};
  std::atomic<Timestamp> delete_ts{0};
};

inline void stamp(std::atomic<Timestamp>& field, Timestamp t) {
  Timestamp cur = field.load(std::memory_order_relaxed);
  while (cur < t &&
         !field.compare_exchange_weak(cur, t, std::memory_order_relaxed)) {
  }
}

// List node. The red chain (red_next) threads every node, dead or alive;
// the blue chain (blue_next) threads only unmarked nodes. Marked nodes stay
// red-reachable so their timestamps keep constraining later transactions.
// `value` is only read or written while the node's latch is held.
struct Node {
  explicit Node(Key k, Value v = kNil, bool dead = false)
      : key(k), value(std::move(v)), marked(dead) {}

  const Key key;
  Value value;
  std::atomic<bool> marked;
  MaxTsTriple max_ts;
  std::atomic<Node*> red_next{nullptr};
  std::atomic<Node*> blue_next{nullptr};
  std::mutex latch;
};

// The neighbourhood of a key in both chains:
//   blue_pred.key < key <= blue_curr.key   (blue chain)
//   red_pred.key  < key <= red_curr.key    (red chain)
// The red scan starts from blue_pred, so red_pred/red_curr always lie in the
// window between blue_pred and blue_curr.
struct Location {
  Node* blue_pred = nullptr;
  Node* red_pred = nullptr;
  Node* red_curr = nullptr;
  Node* blue_curr = nullptr;
};

// Latches currently held by one transaction, refcounted per node. A location
// often aliases roles onto one node (red_curr == blue_curr for a live key)
// and a commit latches overlapping neighbourhoods of several keys; both
// collapse to a single physical lock per node here.
class LatchSet {
 public:
  LatchSet() = default;
  ~LatchSet();
  LatchSet(const LatchSet&) = delete;
  LatchSet& operator=(const LatchSet&) = delete;

  // Locks the location's nodes in role order (blue_pred, red_pred, red_curr,
  // blue_curr), skipping nodes this set already holds.
  void acquire(const Location& loc);
  void release(const Location& loc);

  // Registers a node the caller created and locked itself.
  void add_locked(Node* n);

  void release_all();

  bool holds(const Node* n) const;
  std::size_t distinct_held() const { return held_.size(); }

 private:
  std::unordered_map<Node*, int> held_;
};

struct SearchResult {
  Location loc;
  OpStatus status = OpStatus::Abort;  // Ok (location latched) or Abort
};

struct SearchOptions {
  // Run the time-order check already on interference retries when the key's
  // node is in hand, so doomed transactions fail fast instead of spinning.
  bool time_order_on_retry = false;
};

class RblList {
 public:
  RblList();
  ~RblList();
  RblList(const RblList&) = delete;
  RblList& operator=(const RblList&) = delete;

  // Finds the key's neighbourhood, latches it and validates. Returns with
  // the location latched on Ok; retries internally on interference; returns
  // Abort (nothing latched by this call) when the time-order check fails.
  SearchResult search(Timestamp t_id, Key key, ValidationType vt,
                      LatchSet& held, const SearchOptions& opt = {});

  // Splices per mode; caller holds the location's latches. FreshBoth returns
  // the new node locked and registered with `held`. PromoteToBlue returns
  // the promoted red_curr. RedOnly returns the new dead node (unlatched; it
  // is only reachable through latched predecessors until release).
  Node* splice(const Location& loc, Key key, const Value& value,
               SpliceMode mode, LatchSet& held);

  // Marks blue_curr dead and unlinks it from the blue chain. The node stays
  // on the red chain.
  static void unlink_blue(const Location& loc);

  // Interference check: Ok unless a neighbour is dead or a chain link no
  // longer matches the location.
  static OpStatus method_validation(const Location& loc);

  // Time-order check against the node carrying the key, if any. Rv ignores
  // the lookup stamp (readers don't invalidate readers).
  static OpStatus trans_validation(Timestamp t_id, Key key,
                                   const Location& loc, ValidationType vt);

  // The node holding `key` in this location: blue_curr, else red_curr, else
  // nullptr.
  static Node* apt_curr(const Location& loc, Key key);

  // Commit-time repair of a location gone stale because an earlier update of
  // the same transaction rewired the neighbourhood. `prev` is that update's
  // (already repaired, already applied) location and `prev_key` its key.
  // Every node the repair re-points to is necessarily already latched by the
  // transaction.
  static Location repair_location(const Location& stale, const Location& prev,
                                  bool prev_was_insert, Key prev_key,
                                  const LatchSet& held);

  Node* head() const { return head_; }

  // Quiescent inspection helpers (used by tests and stress checks).
  std::vector<Key> red_keys() const;
  std::vector<Key> blue_keys() const;
  struct NodeStats {
    const Node* node;
    Key key;
    bool marked;
    Timestamp lookup_ts, insert_ts, delete_ts;
  };
  std::vector<NodeStats> node_stats() const;

  // Structural invariants: both chains strictly key-ascending head..tail,
  // blue nodes unmarked, blue chain a subset of the red chain, and every
  // unmarked red node blue-reachable. Only meaningful while quiescent.
  bool check_invariants(std::string* why = nullptr) const;

  // Test hook, called between traversal and latch acquisition.
  void set_test_pause(std::function<void()> fn) { test_pause_ = std::move(fn); }

 private:
  Node* head_;
  Node* tail_;
  std::function<void()> test_pause_;
};

}  // namespace ostm
