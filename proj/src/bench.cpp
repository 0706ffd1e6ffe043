#include "ostm/bench.hpp"

#include <barrier>
#include <cassert>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#ifdef __linux__
#include <sys/prctl.h>
#endif

#include "ostm/ostm.hpp"
#include "ostm/rwstm.hpp"

namespace ostm::bench {

namespace {

// splitmix64, for turning (seed, stream) into well-spread engine seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Op {
  OpName kind;
  Key key;
  std::int64_t value;  // used by inserts
};

std::vector<Op> draw_txn_ops(std::mt19937_64& rng, const WorkloadSpec& spec) {
  std::uniform_int_distribution<int> count_dist(1, spec.ops_per_txn);
  std::uniform_int_distribution<int> pct(0, 99);
  std::uniform_int_distribution<Key> key_dist(1, spec.key_range);
  std::uniform_int_distribution<std::int64_t> val_dist(0, 999'999'999);
  int n = count_dist(rng);
  std::vector<Op> ops;
  ops.reserve(n);
  for (int i = 0; i < n; ++i) {
    int roll = pct(rng);
    OpName kind = roll < spec.lookup_pct ? OpName::Lookup
                  : roll < spec.lookup_pct + spec.insert_pct
                      ? OpName::Insert
                      : OpName::Delete;
    ops.push_back({kind, key_dist(rng), val_dist(rng)});
  }
  return ops;
}

class OstmBackend : public Backend {
 public:
  OstmBackend(const WorkloadSpec& spec, bool hashed, HistoryRecorder* recorder)
      : engine_(OstmConfig{hashed ? spec.buckets : 1, spec.failed_delete_skip,
                           spec.time_order_on_retry}) {
    engine_.set_recorder(recorder);
  }
  Timestamp begin() override { return engine_.begin(); }
  OpStatus insert(Timestamp t, Key key, const Value& value) override {
    return engine_.insert(t, kObj, key, value);
  }
  OpResult lookup(Timestamp t, Key key) override {
    return engine_.lookup(t, kObj, key);
  }
  OpResult erase(Timestamp t, Key key) override {
    return engine_.erase(t, kObj, key);
  }
  OpStatus try_commit(Timestamp t) override { return engine_.try_commit(t); }
  std::size_t resident_keys() const override {
    return engine_.blue_keys(kObj).size();
  }

 private:
  static constexpr ObjId kObj = 0;
  Ostm engine_;
};

class RwstmBackend : public Backend {
 public:
  explicit RwstmBackend(const WorkloadSpec& spec)
      : table_(stm_, spec.buckets) {}
  Timestamp begin() override { return table_.begin(); }
  OpStatus insert(Timestamp t, Key key, const Value& value) override {
    return table_.insert(t, key, value);
  }
  OpResult lookup(Timestamp t, Key key) override {
    return table_.lookup(t, key);
  }
  OpResult erase(Timestamp t, Key key) override { return table_.erase(t, key); }
  OpStatus try_commit(Timestamp t) override { return table_.try_commit(t); }
  std::size_t resident_keys() const override {
    return table_.resident_keys().size();
  }

 private:
  RwStm stm_;
  RwHashTable table_;
};

void busy_work(int us) {
  auto until = std::chrono::steady_clock::now() + std::chrono::microseconds(us);
  while (std::chrono::steady_clock::now() < until) {
  }
}

// Runs one transaction attempt; true iff it committed.
bool attempt(Backend& b, const std::vector<Op>& ops, const WorkloadSpec& spec,
             std::mt19937_64& yield_rng) {
  Timestamp t = b.begin();
  for (const Op& op : ops) {
    if (spec.yield_pct > 0 &&
        static_cast<int>(yield_rng() % 100) < spec.yield_pct)
      std::this_thread::yield();
    OpStatus st;
    switch (op.kind) {
      case OpName::Insert:
        st = b.insert(t, op.key, Value(op.value));
        break;
      case OpName::Lookup:
        st = b.lookup(t, op.key).status;
        break;
      case OpName::Delete:
      default:
        st = b.erase(t, op.key).status;
        break;
    }
    if (spec.op_work_us > 0) busy_work(spec.op_work_us);
    if (spec.op_pause_us > 0)
      std::this_thread::sleep_for(std::chrono::microseconds(spec.op_pause_us));
    if (st == OpStatus::Abort) return false;  // engine closed the txn
  }
  return b.try_commit(t) == OpStatus::Commit;
}

}  // namespace

const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::HtOstm: return "ht-ostm";
    case BackendKind::ListOstm: return "list-ostm";
    case BackendKind::Rwstm: return "rwstm";
  }
  return "?";
}

std::optional<BackendKind> backend_from_string(std::string_view s) {
  if (s == "ht-ostm") return BackendKind::HtOstm;
  if (s == "list-ostm") return BackendKind::ListOstm;
  if (s == "rwstm") return BackendKind::Rwstm;
  return std::nullopt;
}

bool WorkloadSpec::valid(std::string* why) const {
  auto fail = [&](const char* msg) {
    if (why) *why = msg;
    return false;
  };
  if (lookup_pct < 0 || insert_pct < 0 || delete_pct < 0 ||
      lookup_pct + insert_pct + delete_pct != 100)
    return fail("op percentages must be non-negative and sum to 100");
  if (key_range < 1) return fail("key_range must be positive");
  if (ops_per_txn < 1) return fail("ops_per_txn must be positive");
  if (txns_per_thread < 1) return fail("txns_per_thread must be positive");
  if (threads < 1) return fail("threads must be positive");
  if (buckets < 1) return fail("buckets must be positive");
  if (yield_pct < 0 || yield_pct > 100)
    return fail("yield_pct must be within 0..100");
  if (op_work_us < 0 || op_pause_us < 0)
    return fail("per-op delays must be non-negative");
  return true;
}

std::optional<WorkloadSpec> preset(std::string_view name) {
  WorkloadSpec s;
  s.workload_name = std::string(name);
  if (name == "lookup-intensive") {
    s.lookup_pct = 70; s.insert_pct = 10; s.delete_pct = 20;
  } else if (name == "lookup-intensive-fig") {
    s.lookup_pct = 80; s.insert_pct = 15; s.delete_pct = 5;
  } else if (name == "mid" || name == "update-intensive") {
    s.lookup_pct = 50; s.insert_pct = 25; s.delete_pct = 25;
  } else if (name == "update-intensive-fig") {
    s.lookup_pct = 10; s.insert_pct = 45; s.delete_pct = 45;
  } else {
    return std::nullopt;
  }
  return s;
}

std::vector<std::string> preset_names() {
  return {"lookup-intensive", "lookup-intensive-fig", "mid",
          "update-intensive", "update-intensive-fig"};
}

std::unique_ptr<Backend> make_backend(BackendKind kind,
                                      const WorkloadSpec& spec,
                                      HistoryRecorder* recorder) {
  switch (kind) {
    case BackendKind::HtOstm:
      return std::make_unique<OstmBackend>(spec, true, recorder);
    case BackendKind::ListOstm:
      return std::make_unique<OstmBackend>(spec, false, recorder);
    case BackendKind::Rwstm:
      if (recorder != nullptr)
        throw std::invalid_argument(
            "history recording is only supported by the ostm backends");
      return std::make_unique<RwstmBackend>(spec);
  }
  throw std::invalid_argument("unknown backend");
}

void prepopulate(Backend& backend, const WorkloadSpec& spec) {
  std::mt19937_64 rng(mix(spec.seed ^ 0xD1B54A32D192ED03ull));
  std::vector<Key> keys(spec.key_range);
  std::iota(keys.begin(), keys.end(), Key{1});
  std::shuffle(keys.begin(), keys.end(), rng);
  keys.resize(spec.key_range / 2);
  std::uniform_int_distribution<std::int64_t> val_dist(0, 999'999'999);
  for (Key k : keys) {
    Timestamp t = backend.begin();
    OpStatus st = backend.insert(t, k, Value(val_dist(rng)));
    assert(st == OpStatus::Ok);
    (void)st;
    st = backend.try_commit(t);
    assert(st == OpStatus::Commit);  // single-threaded seeding cannot abort
  }
}

RunMetrics run_benchmark(const WorkloadSpec& spec, BackendKind kind,
                         HistoryRecorder* recorder) {
  std::string why;
  if (!spec.valid(&why)) throw std::invalid_argument(why);

  auto backend = make_backend(kind, spec, recorder);
  prepopulate(*backend, spec);

  RunMetrics m;
  m.backend = kind;
  m.threads = spec.threads;
  m.workload = spec.workload_name;
  m.seed = spec.seed;
  m.per_thread.resize(spec.threads);

  // The phase-completion hook runs before anyone is released, so the marks
  // bracket exactly [all workers ready .. last worker done]. Reading the
  // clock after arrive_and_wait instead would race the workers: they can
  // finish an entire short run before the orchestrator is rescheduled.
  std::chrono::steady_clock::time_point marks[2];
  int phase = 0;
  std::barrier sync(spec.threads + 1, [&]() noexcept {
    if (phase < 2) marks[phase] = std::chrono::steady_clock::now();
    ++phase;
  });
  std::vector<std::thread> workers;
  workers.reserve(spec.threads);
  for (int w = 0; w < spec.threads; ++w) {
    workers.emplace_back([&, w] {
#ifdef __linux__
      // Micro-pauses between ops need the timer to honour them; the
      // default 50us slack would round them all up to the same length.
      if (spec.op_pause_us > 0) prctl(PR_SET_TIMERSLACK, 1000UL);
#endif
      std::mt19937_64 rng(mix(spec.seed) ^ mix(w + 1));
      // Draw every transaction up front so retries rerun identical ops.
      std::vector<std::vector<Op>> txns(spec.txns_per_thread);
      for (auto& t : txns) t = draw_txn_ops(rng, spec);
      // Separate stream: yield points must not disturb the drawn ops.
      std::mt19937_64 yield_rng(mix(~spec.seed) ^ mix(w + 1));
      sync.arrive_and_wait();
      ThreadMetrics& tm = m.per_thread[w];
      for (const auto& ops : txns) {
        for (unsigned tries = 0;; ++tries) {
          if (attempt(*backend, ops, spec, yield_rng)) {
            ++tm.commits;
            break;
          }
          ++tm.aborts;
          if (spec.backoff) {
            std::this_thread::sleep_for(std::chrono::microseconds(
                1u << std::min(tries, 10u)));
          }
        }
      }
      sync.arrive_and_wait();
    });
  }

  sync.arrive_and_wait();
  sync.arrive_and_wait();
  for (auto& t : workers) t.join();

  m.wall_time_seconds =
      std::chrono::duration<double>(marks[1] - marks[0]).count();
  for (const ThreadMetrics& tm : m.per_thread) {
    m.total_commits += tm.commits;
    m.total_aborts += tm.aborts;
  }
  m.throughput = m.wall_time_seconds > 0.0
                     ? static_cast<double>(m.total_commits) /
                           m.wall_time_seconds
                     : 0.0;
  return m;
}

std::vector<RunMetrics> sweep(const WorkloadSpec& base,
                              const std::vector<int>& thread_counts,
                              BackendKind kind,
                              const std::string& history_base) {
  if (thread_counts.empty())
    throw std::invalid_argument("sweep needs at least one thread count");
  std::vector<RunMetrics> out;
  for (int n : thread_counts) {
    WorkloadSpec spec = base;
    spec.threads = n;
    if (history_base.empty()) {
      out.push_back(run_benchmark(spec, kind));
    } else {
      HistoryRecorder recorder;
      out.push_back(run_benchmark(spec, kind, &recorder));
      to_file(recorder.snapshot(),
              history_base + ".t" + std::to_string(n));
    }
  }
  return out;
}

std::string csv_header() {
  return "backend,threads,workload,wall_time_seconds,total_aborts,throughput,"
         "seed";
}

std::string csv_row(const RunMetrics& m) {
  std::ostringstream os;
  os << to_string(m.backend) << ',' << m.threads << ',' << m.workload << ','
     << m.wall_time_seconds << ',' << m.total_aborts << ',' << m.throughput
     << ',' << m.seed;
  return os.str();
}

void emit_csv(const std::vector<RunMetrics>& metrics, const std::string& path,
              bool append) {
  if (metrics.empty())
    throw std::invalid_argument("no metrics to write");
  namespace fs = std::filesystem;
  bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  if (fresh) os << csv_header() << '\n';
  for (const RunMetrics& m : metrics) os << csv_row(m) << '\n';
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace ostm::bench
