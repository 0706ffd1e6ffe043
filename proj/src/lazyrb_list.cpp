#include "ostm/lazyrb_list.hpp"

#include <array>
#include <cassert>
#include <set>
#include <sstream>

namespace ostm {

namespace {

// Roles of a location in latch order, deduplicated, order-preserving.
std::array<Node*, 4> distinct_roles(const Location& loc, int* n_out) {
  std::array<Node*, 4> roles{loc.blue_pred, loc.red_pred, loc.red_curr,
                             loc.blue_curr};
  std::array<Node*, 4> out{};
  int n = 0;
  for (Node* r : roles) {
    if (r == nullptr) continue;
    bool seen = false;
    for (int i = 0; i < n; ++i) seen |= (out[i] == r);
    if (!seen) out[n++] = r;
  }
  *n_out = n;
  return out;
}

}  // namespace

LatchSet::~LatchSet() { release_all(); }

void LatchSet::acquire(const Location& loc) {
  int n = 0;
  auto roles = distinct_roles(loc, &n);
  for (int i = 0; i < n; ++i) {
    if (held_[roles[i]]++ == 0) roles[i]->latch.lock();
  }
}

void LatchSet::release(const Location& loc) {
  int n = 0;
  auto roles = distinct_roles(loc, &n);
  for (int i = 0; i < n; ++i) {
    auto it = held_.find(roles[i]);
    assert(it != held_.end() && it->second > 0);
    if (--it->second == 0) {
      roles[i]->latch.unlock();
      held_.erase(it);
    }
  }
}

void LatchSet::add_locked(Node* n) { ++held_[n]; }

void LatchSet::release_all() {
  for (auto& [node, cnt] : held_) {
    (void)cnt;
    node->latch.unlock();
  }
  held_.clear();
}

bool LatchSet::holds(const Node* n) const {
  return held_.count(const_cast<Node*>(n)) != 0;
}

RblList::RblList() {
  head_ = new Node(kHeadKey);
  tail_ = new Node(kTailKey);
  head_->red_next.store(tail_, std::memory_order_relaxed);
  head_->blue_next.store(tail_, std::memory_order_relaxed);
}

RblList::~RblList() {
  // Every node ever spliced stays red-reachable, so the red chain frees all.
  Node* n = head_;
  while (n != nullptr) {
    Node* next = n->red_next.load(std::memory_order_relaxed);
    delete n;
    n = next;
  }
}

SearchResult RblList::search(Timestamp t_id, Key key, ValidationType vt,
                             LatchSet& held, const SearchOptions& opt) {
  assert(is_user_key(key));
  for (;;) {
    Location loc;
    loc.blue_pred = head_;
    loc.blue_curr = loc.blue_pred->blue_next.load(std::memory_order_acquire);
    while (loc.blue_curr->key < key) {
      loc.blue_pred = loc.blue_curr;
      loc.blue_curr = loc.blue_pred->blue_next.load(std::memory_order_acquire);
    }
    // Red scan starts from the blue predecessor: dead nodes with keys below
    // `key` can only sit in that window.
    loc.red_pred = loc.blue_pred;
    loc.red_curr = loc.red_pred->red_next.load(std::memory_order_acquire);
    while (loc.red_curr->key < key) {
      loc.red_pred = loc.red_curr;
      loc.red_curr = loc.red_pred->red_next.load(std::memory_order_acquire);
    }

    if (test_pause_) test_pause_();

    held.acquire(loc);
    OpStatus st = method_validation(loc);
    if (st == OpStatus::Ok) {
      st = trans_validation(t_id, key, loc, vt);
    } else if (opt.time_order_on_retry && apt_curr(loc, key) != nullptr &&
               trans_validation(t_id, key, loc, vt) == OpStatus::Abort) {
      st = OpStatus::Abort;
    }
    if (st == OpStatus::Ok) {
      assert(loc.blue_pred->key < key && key <= loc.blue_curr->key);
      assert(loc.red_pred->key < key && key <= loc.red_curr->key);
      return {loc, OpStatus::Ok};
    }
    held.release(loc);
    if (st == OpStatus::Abort) return {{}, OpStatus::Abort};
    // Interference: somebody rewired the neighbourhood first. Go again.
  }
}

Node* RblList::splice(const Location& loc, Key key, const Value& value,
                      SpliceMode mode, LatchSet& held) {
  assert(is_user_key(key));
  switch (mode) {
    case SpliceMode::PromoteToBlue: {
      Node* n = loc.red_curr;
      assert(n->key == key && held.holds(n));
      n->value = value;
      n->marked.store(false, std::memory_order_release);
      n->blue_next.store(loc.blue_curr, std::memory_order_release);
      loc.blue_pred->blue_next.store(n, std::memory_order_release);
      return n;
    }
    case SpliceMode::RedOnly: {
      assert(loc.red_curr->key != key);
      Node* n = new Node(key, value, /*dead=*/true);
      n->red_next.store(loc.red_curr, std::memory_order_relaxed);
      loc.red_pred->red_next.store(n, std::memory_order_release);
      return n;
    }
    case SpliceMode::FreshBoth: {
      assert(loc.red_curr->key != key && loc.blue_curr->key != key);
      Node* n = new Node(key, value, /*dead=*/false);
      n->latch.lock();
      held.add_locked(n);
      // Outgoing links first, red before blue: a node must never be
      // blue-reachable without being red-reachable.
      n->red_next.store(loc.red_curr, std::memory_order_relaxed);
      n->blue_next.store(loc.blue_curr, std::memory_order_relaxed);
      loc.red_pred->red_next.store(n, std::memory_order_release);
      loc.blue_pred->blue_next.store(n, std::memory_order_release);
      return n;
    }
  }
  return nullptr;
}

void RblList::unlink_blue(const Location& loc) {
  Node* victim = loc.blue_curr;
  assert(is_user_key(victim->key));
  victim->marked.store(true, std::memory_order_release);
  loc.blue_pred->blue_next.store(
      victim->blue_next.load(std::memory_order_relaxed),
      std::memory_order_release);
}

OpStatus RblList::method_validation(const Location& loc) {
  if (loc.blue_pred->marked.load(std::memory_order_acquire) ||
      loc.blue_curr->marked.load(std::memory_order_acquire) ||
      loc.blue_pred->blue_next.load(std::memory_order_acquire) !=
          loc.blue_curr ||
      loc.red_pred->red_next.load(std::memory_order_acquire) != loc.red_curr) {
    return OpStatus::Retry;
  }
  return OpStatus::Ok;
}

OpStatus RblList::trans_validation(Timestamp t_id, Key key,
                                   const Location& loc, ValidationType vt) {
  Node* n = apt_curr(loc, key);
  if (n == nullptr) return OpStatus::Ok;
  if (t_id < n->max_ts.insert_ts.load(std::memory_order_relaxed) ||
      t_id < n->max_ts.delete_ts.load(std::memory_order_relaxed)) {
    return OpStatus::Abort;
  }
  if (vt == ValidationType::TryC &&
      t_id < n->max_ts.lookup_ts.load(std::memory_order_relaxed)) {
    return OpStatus::Abort;
  }
  return OpStatus::Ok;
}

Node* RblList::apt_curr(const Location& loc, Key key) {
  if (loc.blue_curr != nullptr && loc.blue_curr->key == key)
    return loc.blue_curr;
  if (loc.red_curr != nullptr && loc.red_curr->key == key) return loc.red_curr;
  return nullptr;
}

Location RblList::repair_location(const Location& stale, const Location& prev,
                                  bool prev_was_insert, Key prev_key,
                                  const LatchSet& held) {
  Location loc = stale;
  if (loc.blue_pred->marked.load(std::memory_order_relaxed) ||
      loc.blue_pred->blue_next.load(std::memory_order_relaxed) !=
          loc.blue_curr) {
    // An insert leaves its node at prev.blue_pred->blue_next; a delete makes
    // prev.blue_pred itself the nearest live predecessor again.
    Node* bp = prev_was_insert
                   ? prev.blue_pred->blue_next.load(std::memory_order_relaxed)
                   : prev.blue_pred;
    assert(held.holds(bp));
    (void)held;
    loc.blue_pred = bp;
  }
  if (loc.red_pred->red_next.load(std::memory_order_relaxed) != loc.red_curr) {
    // The new red predecessor is prev_key's node when one exists (fresh
    // splice, promotion, or a delete, which keeps the corpse red-linked).
    // A delete that found nothing leaves no node at prev_key; then prev's
    // own red predecessor is still the nearest one.
    Node* cand = prev.red_pred->red_next.load(std::memory_order_relaxed);
    Node* rp = cand->key == prev_key ? cand : prev.red_pred;
    assert(held.holds(rp));
    loc.red_pred = rp;
  }
  assert(loc.blue_pred->blue_next.load(std::memory_order_relaxed) ==
         loc.blue_curr);
  assert(loc.red_pred->red_next.load(std::memory_order_relaxed) ==
         loc.red_curr);
  return loc;
}

std::vector<Key> RblList::red_keys() const {
  std::vector<Key> out;
  for (Node* n = head_->red_next.load(); n != nullptr && n->key != kTailKey;
       n = n->red_next.load()) {
    out.push_back(n->key);
  }
  return out;
}

std::vector<Key> RblList::blue_keys() const {
  std::vector<Key> out;
  for (Node* n = head_->blue_next.load(); n != nullptr && n->key != kTailKey;
       n = n->blue_next.load()) {
    out.push_back(n->key);
  }
  return out;
}

std::vector<RblList::NodeStats> RblList::node_stats() const {
  std::vector<NodeStats> out;
  for (Node* n = head_; n != nullptr; n = n->red_next.load()) {
    out.push_back({n, n->key, n->marked.load(),
                   n->max_ts.lookup_ts.load(), n->max_ts.insert_ts.load(),
                   n->max_ts.delete_ts.load()});
  }
  return out;
}

bool RblList::check_invariants(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::set<const Node*> red_set;
  std::set<const Node*> unmarked;
  Key prev = kHeadKey;
  const Node* n = head_->red_next.load();
  for (; n != nullptr && n->key != kTailKey; n = n->red_next.load()) {
    if (n->key <= prev) {
      std::ostringstream os;
      os << "red chain not strictly ascending at key " << n->key;
      return fail(os.str());
    }
    prev = n->key;
    red_set.insert(n);
    if (!n->marked.load()) unmarked.insert(n);
  }
  if (n == nullptr) return fail("red chain does not reach the tail");

  prev = kHeadKey;
  std::set<const Node*> blue_set;
  n = head_->blue_next.load();
  for (; n != nullptr && n->key != kTailKey; n = n->blue_next.load()) {
    if (n->key <= prev) {
      std::ostringstream os;
      os << "blue chain not strictly ascending at key " << n->key;
      return fail(os.str());
    }
    prev = n->key;
    if (n->marked.load()) {
      std::ostringstream os;
      os << "marked node " << n->key << " on the blue chain";
      return fail(os.str());
    }
    if (!red_set.count(n)) {
      std::ostringstream os;
      os << "blue node " << n->key << " not red-reachable";
      return fail(os.str());
    }
    blue_set.insert(n);
  }
  if (n == nullptr) return fail("blue chain does not reach the tail");
  if (blue_set != unmarked)
    return fail("an unmarked node is missing from the blue chain");
  return true;
}

}  // namespace ostm
