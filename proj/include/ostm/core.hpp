#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <optional>

namespace ostm {

using Key = std::int64_t;
using ObjId = std::uint64_t;
using Timestamp = std::uint64_t;

// Sentinel keys bracketing every user key. The chains of a list always run
// from a head node with kHeadKey to a tail node with kTailKey, so traversals
// never fall off the end.
inline constexpr Key kHeadKey = std::numeric_limits<Key>::min();
inline constexpr Key kTailKey = std::numeric_limits<Key>::max();

inline constexpr bool is_user_key(Key k) { return k > kHeadKey && k < kTailKey; }

// Payloads are integers; a disengaged optional is the distinguished nil.
using Value = std::optional<std::int64_t>;
inline constexpr std::nullopt_t kNil = std::nullopt;

// Timestamp 0 is reserved for the notional initial transaction that the
// checker synthesizes; live transactions start at 1.
inline constexpr Timestamp kInitialTx = 0;

enum class OpStatus : std::uint8_t { Abort = 0, Ok, Fail, Retry, Commit };
enum class OpName : std::uint8_t { Insert, Delete, Lookup };

// A method's value/status return pair.
struct OpResult {
  Value value;
  OpStatus status = OpStatus::Abort;
};

// Rv covers the shared-memory phase of lookup/delete; TryC is commit-time
// revalidation of the update methods.
enum class ValidationType : std::uint8_t { Rv, TryC };

// How a splice enters the chains: a dead node threaded into the red chain
// only, promotion of an existing red node into the blue chain, or a fresh
// node linked into both chains at once.
enum class SpliceMode : std::uint8_t { RedOnly, PromoteToBlue, FreshBoth };

inline const char* to_string(OpStatus s) {
  switch (s) {
    case OpStatus::Abort: return "ABORT";
    case OpStatus::Ok: return "OK";
    case OpStatus::Fail: return "FAIL";
    case OpStatus::Retry: return "RETRY";
    case OpStatus::Commit: return "COMMIT";
  }
  return "?";
}

inline const char* to_string(OpName n) {
  switch (n) {
    case OpName::Insert: return "INSERT";
    case OpName::Delete: return "DELETE";
    case OpName::Lookup: return "LOOKUP";
  }
  return "?";
}

// Monotone transaction-id source shared by every transaction of an instance.
// Ids double as begin-order timestamps: a begin that returns before another
// is invoked always receives the smaller id.
class TimestampSource {
 public:
  Timestamp next() { return counter_.fetch_add(1, std::memory_order_relaxed) + 1; }
  Timestamp last_issued() const { return counter_.load(std::memory_order_relaxed); }

 private:
  std::atomic<Timestamp> counter_{kInitialTx};
};

}  // namespace ostm
