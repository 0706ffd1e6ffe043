#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ostm/core.hpp"
#include "ostm/history.hpp"

namespace ostm::bench {

enum class BackendKind : std::uint8_t { HtOstm, ListOstm, Rwstm };

const char* to_string(BackendKind k);
std::optional<BackendKind> backend_from_string(std::string_view s);

struct WorkloadSpec {
  int lookup_pct = 70;
  int insert_pct = 10;
  int delete_pct = 20;
  std::int64_t key_range = 1000;
  int ops_per_txn = 5;  // upper bound; each transaction draws 1..ops_per_txn
  int txns_per_thread = 10;
  int threads = 2;
  std::uint64_t seed = 1;
  std::size_t buckets = 5;
  bool failed_delete_skip = true;
  bool time_order_on_retry = false;
  bool backoff = false;  // exponential backoff between retries
  // Chance (percent) of ceding the cpu before each op. On machines with
  // fewer cores than threads the scheduler alone produces long, rare
  // preemption gaps; random yields emulate the dense short overlaps real
  // parallel hardware gives.
  int yield_pct = 0;
  // Per-op think time: busy-work for op_work_us, then cede the cpu for
  // op_pause_us. Dilating ops keeps the amount of foreign work that lands
  // inside a transaction's window proportional to op_pause_us/op_work_us
  // instead of raw machine speed, so contention measurements transfer
  // across core counts. Zero disables.
  int op_work_us = 0;
  int op_pause_us = 0;
  std::string workload_name = "custom";

  bool valid(std::string* why = nullptr) const;
};

// Named op mixes (lookup/insert/delete percentages):
//   lookup-intensive      70/10/20
//   lookup-intensive-fig  80/15/5
//   mid                   50/25/25
//   update-intensive      50/25/25
//   update-intensive-fig  10/45/45
std::optional<WorkloadSpec> preset(std::string_view name);
std::vector<std::string> preset_names();

struct ThreadMetrics {
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;

  bool operator==(const ThreadMetrics&) const = default;
};

struct RunMetrics {
  BackendKind backend = BackendKind::HtOstm;
  int threads = 0;
  std::string workload;
  double wall_time_seconds = 0.0;
  std::uint64_t total_commits = 0;
  std::uint64_t total_aborts = 0;
  double throughput = 0.0;  // commits per second
  std::uint64_t seed = 0;
  std::vector<ThreadMetrics> per_thread;
};

// Uniform transactional interface over the engines, for workload driving.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Timestamp begin() = 0;
  virtual OpStatus insert(Timestamp t, Key key, const Value& value) = 0;
  virtual OpResult lookup(Timestamp t, Key key) = 0;
  virtual OpResult erase(Timestamp t, Key key) = 0;
  virtual OpStatus try_commit(Timestamp t) = 0;
  virtual std::size_t resident_keys() const = 0;
};

// `recorder` is only supported by the ostm backends.
std::unique_ptr<Backend> make_backend(BackendKind kind,
                                      const WorkloadSpec& spec,
                                      HistoryRecorder* recorder = nullptr);

// Seeds the table with key_range/2 distinct keys through committed
// transactions, deterministically from spec.seed.
void prepopulate(Backend& backend, const WorkloadSpec& spec);

// One run: fresh backend, prepopulation, then threads × txns_per_thread
// transactions, each retried with a fresh begin until it commits. Op streams
// are drawn deterministically per (seed, thread).
RunMetrics run_benchmark(const WorkloadSpec& spec, BackendKind kind,
                         HistoryRecorder* recorder = nullptr);

// run_benchmark per thread count. When history_base is non-empty, each run
// records its history to "<history_base>.t<threads>".
std::vector<RunMetrics> sweep(const WorkloadSpec& base,
                              const std::vector<int>& thread_counts,
                              BackendKind kind,
                              const std::string& history_base = "");

std::string csv_header();
std::string csv_row(const RunMetrics& m);

// Appends rows to `path`, writing the header only when the file is new or
// empty. Throws std::invalid_argument on an empty metrics list.
void emit_csv(const std::vector<RunMetrics>& metrics, const std::string& path,
              bool append = true);

}  // namespace ostm::bench
