#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ostm/bench.hpp"
#include "ostm/checker.hpp"
#include "ostm/history.hpp"

namespace {

using namespace ostm;
using namespace ostm::bench;

struct BenchArgs {
  std::string backend = "ht-ostm";
  std::string workload = "lookup-intensive";
  std::string threads = "2";
  std::int64_t key_range = 1000;
  int ops_per_txn = 5;
  int txns_per_thread = 10;
  std::size_t buckets = 5;
  std::uint64_t seed = 1;
  std::string failed_delete_skip = "on";
  bool time_order_on_retry = false;
  bool backoff = false;
  int yield_pct = 0;
  int op_work_us = 0;
  int op_pause_us = 0;
  std::string csv_path;
  std::string history_path;
};

void add_common_options(CLI::App* cmd, BenchArgs* a) {
  cmd->add_option("--backend", a->backend, "ht-ostm, list-ostm or rwstm")
      ->capture_default_str();
  cmd->add_option("--workload", a->workload,
                  "preset name or custom L,I,D percentages")
      ->capture_default_str();
  cmd->add_option("--key-range", a->key_range, "keys are drawn from 1..N")
      ->capture_default_str();
  cmd->add_option("--ops-per-txn", a->ops_per_txn,
                  "methods per transaction (upper bound)")
      ->capture_default_str();
  cmd->add_option("--txns-per-thread", a->txns_per_thread,
                  "transactions each thread commits")
      ->capture_default_str();
  cmd->add_option("--buckets", a->buckets, "hash buckets")
      ->capture_default_str();
  cmd->add_option("--seed", a->seed, "workload seed")->capture_default_str();
  cmd->add_option("--failed-delete-skip", a->failed_delete_skip,
                  "off revalidates failed deletes at commit (ostm backends)")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  cmd->add_flag("--time-order-on-retry", a->time_order_on_retry,
                "fail fast on interference retries (ostm backends)");
  cmd->add_flag("--backoff", a->backoff,
                "exponential backoff between transaction retries");
  cmd->add_option("--yield-pct", a->yield_pct,
                  "chance (%) of ceding the cpu before each op; emulates "
                  "parallel overlap on boxes with few cores")
      ->capture_default_str();
  cmd->add_option("--op-work-us", a->op_work_us,
                  "busy think time after each op (microseconds)")
      ->capture_default_str();
  cmd->add_option("--op-pause-us", a->op_pause_us,
                  "sleep after each op (microseconds); with --op-work-us "
                  "this dilates transactions so overlap develops on "
                  "machines with few cores")
      ->capture_default_str();
  cmd->add_option("--csv", a->csv_path, "append metrics to this CSV file");
}

// "L,I,D" -> percentages; otherwise a preset name.
WorkloadSpec parse_workload(const BenchArgs& a) {
  WorkloadSpec spec;
  if (a.workload.find(',') != std::string::npos) {
    spec.workload_name = "custom";
    if (std::sscanf(a.workload.c_str(), "%d,%d,%d", &spec.lookup_pct,
                    &spec.insert_pct, &spec.delete_pct) != 3) {
      throw CLI::ValidationError("--workload",
                                 "expected L,I,D percentages or a preset");
    }
  } else {
    auto p = preset(a.workload);
    if (!p) {
      std::string names;
      for (const auto& n : preset_names()) names += " " + n;
      throw CLI::ValidationError("--workload",
                                 "unknown preset; known:" + names);
    }
    spec = *p;
  }
  spec.key_range = a.key_range;
  spec.ops_per_txn = a.ops_per_txn;
  spec.txns_per_thread = a.txns_per_thread;
  spec.buckets = a.buckets;
  spec.seed = a.seed;
  spec.failed_delete_skip = a.failed_delete_skip == "on";
  spec.time_order_on_retry = a.time_order_on_retry;
  spec.backoff = a.backoff;
  spec.yield_pct = a.yield_pct;
  spec.op_work_us = a.op_work_us;
  spec.op_pause_us = a.op_pause_us;
  std::string why;
  if (!spec.valid(&why)) throw CLI::ValidationError("workload", why);
  return spec;
}

BackendKind parse_backend(const BenchArgs& a) {
  auto kind = backend_from_string(a.backend);
  if (!kind)
    throw CLI::ValidationError("--backend",
                               "expected ht-ostm, list-ostm or rwstm");
  return *kind;
}

std::vector<int> parse_threads(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    std::string part = s.substr(start, comma - start);
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--threads", "bad thread count '" + part +
                                                  "'");
    }
    if (out.back() < 1)
      throw CLI::ValidationError("--threads", "thread counts must be >= 1");
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void print_metrics(const RunMetrics& m) {
  std::printf(
      "backend=%s threads=%d workload=%s commits=%llu aborts=%llu "
      "wall=%.6fs throughput=%.1f commits/s seed=%llu\n",
      to_string(m.backend), m.threads, m.workload.c_str(),
      static_cast<unsigned long long>(m.total_commits),
      static_cast<unsigned long long>(m.total_aborts), m.wall_time_seconds,
      m.throughput, static_cast<unsigned long long>(m.seed));
}

int run_bench(const BenchArgs& a) {
  WorkloadSpec spec = parse_workload(a);
  BackendKind kind = parse_backend(a);
  auto counts = parse_threads(a.threads);
  if (counts.size() != 1)
    throw CLI::ValidationError("--threads",
                               "bench takes one thread count; use sweep");
  spec.threads = counts[0];

  RunMetrics m;
  if (a.history_path.empty()) {
    m = run_benchmark(spec, kind);
  } else {
    HistoryRecorder recorder;
    m = run_benchmark(spec, kind, &recorder);
    to_file(recorder.snapshot(), a.history_path);
    std::printf("history: %zu records -> %s\n", recorder.size(),
                a.history_path.c_str());
  }
  print_metrics(m);
  if (!a.csv_path.empty()) emit_csv({m}, a.csv_path);
  return 0;
}

int run_sweep(const BenchArgs& a) {
  WorkloadSpec spec = parse_workload(a);
  BackendKind kind = parse_backend(a);
  auto counts = parse_threads(a.threads);
  auto metrics = sweep(spec, counts, kind, a.history_path);
  for (const RunMetrics& m : metrics) print_metrics(m);
  if (!a.csv_path.empty()) emit_csv(metrics, a.csv_path);
  return 0;
}

int run_check(const std::string& path) {
  History h = from_file(path);
  std::size_t committed = 0, aborted = 0, txns = 0;
  {
    std::map<Timestamp, bool> seen;
    for (const MethodRecord& r : h.records()) {
      if (!seen.count(r.t_id)) {
        seen[r.t_id] = false;
        ++txns;
      }
      if (r.kind == MethodKind::TryCommit && r.status == OpStatus::Commit)
        seen[r.t_id] = true;
    }
    for (const auto& [id, c] : seen) {
      (void)id;
      c ? ++committed : ++aborted;
    }
  }
  Verdict v = check_co_opacity(h);
  std::printf("history: %zu records, %zu transactions (%zu committed, %zu"
              " aborted or live)\n",
              h.size(), txns, committed, aborted);
  std::printf("legal: %s\n", v.legal ? "yes" : "no");
  std::size_t by_type[4] = {0, 0, 0, 0};
  for (const ConflictEdge& e : v.edges) ++by_type[static_cast<int>(e.type)];
  std::printf(
      "edges: conflict=%zu (tryc-tryc %zu, tryc-rv %zu, rv-tryc %zu), "
      "real-time=%zu\n",
      by_type[0] + by_type[1] + by_type[2], by_type[0], by_type[1], by_type[2],
      by_type[3]);
  std::printf("co-opaque: %s\n", v.co_opaque ? "yes" : "no");
  if (v.co_opaque) {
    std::printf("witness:");
    for (Timestamp t : v.witness) std::printf(" %llu",
                                              (unsigned long long)t);
    std::printf("\n");
    return 0;
  }
  if (v.violation) {
    std::printf("violation: %s (method lp %llu, update lp %llu)\n",
                v.violation->reason.c_str(),
                (unsigned long long)v.violation->method_lp,
                (unsigned long long)v.violation->update_lp);
  } else {
    std::printf("conflict cycle:");
    for (Timestamp t : v.cycle) std::printf(" %llu", (unsigned long long)t);
    std::printf("\n");
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transactional hash table: benchmarks and history checking"};
  app.require_subcommand(1);

  BenchArgs bench_args;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "run one benchmark configuration");
  add_common_options(bench_cmd, &bench_args);
  bench_cmd->add_option("--threads", bench_args.threads, "worker threads")
      ->capture_default_str();
  bench_cmd->add_option("--record-history", bench_args.history_path,
                        "write the run's history to this file");

  BenchArgs sweep_args;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run the same workload across thread counts");
  add_common_options(sweep_cmd, &sweep_args);
  sweep_cmd
      ->add_option("--threads", sweep_args.threads,
                   "comma-separated thread counts, e.g. 2,4,8")
      ->capture_default_str();
  sweep_cmd->add_option("--record-history", sweep_args.history_path,
                        "write one history per run to <base>.t<threads>");

  std::string check_path;
  CLI::App* check_cmd =
      app.add_subcommand("check", "check a recorded history file");
  check_cmd->add_option("file", check_path, "history file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench_cmd->parsed()) return run_bench(bench_args);
    if (sweep_cmd->parsed()) return run_sweep(sweep_args);
    if (check_cmd->parsed()) return run_check(check_path);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
