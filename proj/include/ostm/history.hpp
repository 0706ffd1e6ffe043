#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ostm/core.hpp"

namespace ostm {

enum class MethodKind : std::uint8_t {
  Begin,
  Lookup,
  Insert,
  Delete,
  TryCommit,
  TryAbort,
};

const char* to_string(MethodKind k);

// One method of one transaction. inv/rsp bracket the call in real time;
// lp is the instant the method took effect (always strictly between the
// two), drawn from the same global sequence. Ordering records by lp yields
// the equivalent sequential history.
struct MethodRecord {
  Timestamp t_id = 0;
  MethodKind kind = MethodKind::Begin;
  ObjId obj = 0;
  std::optional<Key> key;  // engaged for Lookup/Insert/Delete only
  Value value;             // written (insert) or returned (lookup/delete)
  OpStatus status = OpStatus::Ok;
  std::uint64_t inv_seq = 0;
  std::uint64_t rsp_seq = 0;
  std::uint64_t lp_seq = 0;

  bool operator==(const MethodRecord&) const = default;
};

// Method records sorted by lp. Construction sorts, so files or fixtures can
// supply records in any order.
class History {
 public:
  History() = default;
  explicit History(std::vector<MethodRecord> records);

  const std::vector<MethodRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }

  // Per transaction: a Begin comes first, nothing follows a commit or an
  // abort, lp values are unique, and each record has inv < lp < rsp.
  bool well_formed(std::string* why = nullptr) const;

  bool operator==(const History&) const = default;

 private:
  std::vector<MethodRecord> records_;
};

struct HistoryParseError : std::runtime_error {
  HistoryParseError(std::size_t line_no, const std::string& what)
      : std::runtime_error("history parse error at line " +
                           std::to_string(line_no) + ": " + what),
        line(line_no) {}
  std::size_t line;
};

// Tab-separated, one record per line, "ostm-history v1" header line.
std::string to_text(const History& h);
History from_text(const std::string& text);
void to_file(const History& h, const std::string& path);
History from_file(const std::string& path);

// Collects records from concurrently running transactions and hands out the
// shared event sequence that inv/lp/rsp are drawn from.
class HistoryRecorder {
 public:
  std::uint64_t next_seq() {
    return seq_.fetch_add(1, std::memory_order_relaxed) + 1;
  }
  void append(MethodRecord rec) {
    std::lock_guard<std::mutex> g(mu_);
    records_.push_back(std::move(rec));
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> g(mu_);
    return records_.size();
  }
  History snapshot() const {
    std::lock_guard<std::mutex> g(mu_);
    return History(records_);
  }

 private:
  std::atomic<std::uint64_t> seq_{0};
  mutable std::mutex mu_;
  std::vector<MethodRecord> records_;
};

// Pairs (i, j) such that transaction i's last response precedes transaction
// j's first invocation.
std::vector<std::pair<Timestamp, Timestamp>> real_time_order(const History& h);

}  // namespace ostm
