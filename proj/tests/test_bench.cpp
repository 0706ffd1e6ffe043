#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ostm/bench.hpp"
#include "ostm/checker.hpp"
#include "ostm/history.hpp"

using namespace ostm;
using namespace ostm::bench;

namespace {

WorkloadSpec small_spec() {
  WorkloadSpec s;
  s.key_range = 60;
  s.ops_per_txn = 4;
  s.txns_per_thread = 25;
  s.threads = 1;
  s.buckets = 3;
  s.seed = 7;
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("backend names round-trip") {
  for (BackendKind k :
       {BackendKind::HtOstm, BackendKind::ListOstm, BackendKind::Rwstm}) {
    auto back = backend_from_string(to_string(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK(!backend_from_string("mystery").has_value());
  CHECK(!backend_from_string("").has_value());
}

TEST_CASE("presets carry the documented op mixes") {
  auto names = preset_names();
  REQUIRE(names.size() == 5);
  for (const auto& name : names) {
    auto s = preset(name);
    REQUIRE(s.has_value());
    CHECK(s->valid());
    CHECK(s->workload_name == name);
  }
  auto mixes = [](const WorkloadSpec& s) {
    return std::vector<int>{s.lookup_pct, s.insert_pct, s.delete_pct};
  };
  CHECK(mixes(*preset("lookup-intensive")) == std::vector<int>{70, 10, 20});
  CHECK(mixes(*preset("lookup-intensive-fig")) == std::vector<int>{80, 15, 5});
  CHECK(mixes(*preset("mid")) == std::vector<int>{50, 25, 25});
  CHECK(mixes(*preset("update-intensive")) == std::vector<int>{50, 25, 25});
  CHECK(mixes(*preset("update-intensive-fig")) == std::vector<int>{10, 45, 45});
  CHECK(!preset("write-heavy").has_value());
}

TEST_CASE("workload validation rejects bad shapes") {
  std::string why;
  WorkloadSpec s = small_spec();
  REQUIRE(s.valid(&why));

  SUBCASE("percentages must sum to 100") {
    s.lookup_pct = 50;
    s.insert_pct = 30;
    s.delete_pct = 30;
    CHECK(!s.valid(&why));
    CHECK(why.find("sum to 100") != std::string::npos);
  }
  SUBCASE("negative percentages") {
    s.lookup_pct = 120;
    s.insert_pct = -20;
    CHECK(!s.valid(&why));
  }
  SUBCASE("ranges and counts must be positive") {
    auto broken = [&](auto mutate) {
      WorkloadSpec t = small_spec();
      mutate(t);
      return !t.valid();
    };
    CHECK(broken([](WorkloadSpec& t) { t.key_range = 0; }));
    CHECK(broken([](WorkloadSpec& t) { t.ops_per_txn = 0; }));
    CHECK(broken([](WorkloadSpec& t) { t.txns_per_thread = 0; }));
    CHECK(broken([](WorkloadSpec& t) { t.threads = 0; }));
    CHECK(broken([](WorkloadSpec& t) { t.buckets = 0; }));
  }
  SUBCASE("run_benchmark refuses an invalid spec") {
    s.threads = 0;
    CHECK_THROWS_AS(run_benchmark(s, BackendKind::HtOstm),
                    std::invalid_argument);
  }
}

TEST_CASE("history recording is refused by the read/write backend") {
  HistoryRecorder rec;
  CHECK_THROWS_AS(make_backend(BackendKind::Rwstm, small_spec(), &rec),
                  std::invalid_argument);
  CHECK(make_backend(BackendKind::Rwstm, small_spec()) != nullptr);
}

TEST_CASE("prepopulation fills half the key range") {
  WorkloadSpec s = small_spec();
  s.key_range = 100;
  for (BackendKind k :
       {BackendKind::HtOstm, BackendKind::ListOstm, BackendKind::Rwstm}) {
    auto backend = make_backend(k, s);
    CHECK(backend->resident_keys() == 0);
    prepopulate(*backend, s);
    CHECK(backend->resident_keys() == 50);
  }
}

TEST_CASE("single-threaded runs never abort and repeat exactly") {
  WorkloadSpec s = small_spec();
  for (BackendKind k :
       {BackendKind::HtOstm, BackendKind::ListOstm, BackendKind::Rwstm}) {
    CAPTURE(to_string(k));
    RunMetrics a = run_benchmark(s, k);
    CHECK(a.backend == k);
    CHECK(a.threads == 1);
    CHECK(a.seed == s.seed);
    CHECK(a.workload == "custom");
    CHECK(a.total_aborts == 0);
    CHECK(a.total_commits ==
          static_cast<std::uint64_t>(s.txns_per_thread));
    REQUIRE(a.per_thread.size() == 1);
    CHECK(a.per_thread[0].commits == a.total_commits);

    // Same seed, same stream: the logical outcome repeats (wall time won't).
    RunMetrics b = run_benchmark(s, k);
    CHECK(b.total_commits == a.total_commits);
    CHECK(b.total_aborts == a.total_aborts);
    CHECK(b.per_thread == a.per_thread);
  }
}

TEST_CASE("every transaction is retried until it commits") {
  WorkloadSpec s = small_spec();
  s.threads = 4;
  s.txns_per_thread = 40;
  s.key_range = 12;  // tight range to force contention
  for (BackendKind k : {BackendKind::HtOstm, BackendKind::Rwstm}) {
    CAPTURE(to_string(k));
    RunMetrics m = run_benchmark(s, k);
    CHECK(m.total_commits == static_cast<std::uint64_t>(s.threads) *
                                 static_cast<std::uint64_t>(s.txns_per_thread));
    REQUIRE(m.per_thread.size() == 4);
    for (const ThreadMetrics& tm : m.per_thread)
      CHECK(tm.commits == static_cast<std::uint64_t>(s.txns_per_thread));
    CHECK(m.wall_time_seconds > 0.0);
    CHECK(m.throughput > 0.0);
  }
}

TEST_CASE("backoff runs still account every commit") {
  WorkloadSpec s = small_spec();
  s.threads = 3;
  s.txns_per_thread = 15;
  s.key_range = 12;
  s.backoff = true;
  RunMetrics m = run_benchmark(s, BackendKind::HtOstm);
  CHECK(m.total_commits == 45);
}

TEST_CASE("recorded runs produce checkable histories") {
  WorkloadSpec s = small_spec();
  s.threads = 3;
  s.txns_per_thread = 20;
  s.key_range = 16;
  for (BackendKind k : {BackendKind::HtOstm, BackendKind::ListOstm}) {
    CAPTURE(to_string(k));
    HistoryRecorder rec;
    RunMetrics m = run_benchmark(s, k, &rec);
    History h = rec.snapshot();
    CHECK(h.size() > 0);
    std::string why;
    CHECK(h.well_formed(&why));
    CHECK(why.empty());
    Verdict v = check_co_opacity(h);
    CHECK(v.legal);
    CHECK(v.co_opaque);
    CHECK(replay_matches(h, v.witness));
    // Committed transactions at minimum: prepopulation plus the workload.
    std::uint64_t committed = 0;
    for (const MethodRecord& r : h.records())
      if (r.kind == MethodKind::TryCommit && r.status == OpStatus::Commit)
        ++committed;
    CHECK(committed >= m.total_commits + s.key_range / 2);
  }
}

TEST_CASE("csv output keeps one header per file") {
  const std::string path = "bench_csv_test.tmp";
  std::remove(path.c_str());

  RunMetrics m = run_benchmark(small_spec(), BackendKind::ListOstm);
  emit_csv({m}, path);
  auto lines = read_lines(path);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "backend,threads,workload,wall_time_seconds,total_aborts,throughput,"
        "seed");
  CHECK(lines[1] == csv_row(m));
  CHECK(lines[1].find("list-ostm,1,custom,") == 0);
  CHECK(lines[1].ends_with(",7"));  // seed is last

  emit_csv({m, m}, path);  // append: no second header
  lines = read_lines(path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[2] == lines[1]);
  CHECK(lines[3] == lines[1]);

  emit_csv({m}, path, /*append=*/false);  // truncate rewrites the header
  lines = read_lines(path);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == csv_header());

  CHECK_THROWS_AS(emit_csv({}, path), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("sweep runs one benchmark per thread count") {
  WorkloadSpec base = small_spec();
  base.txns_per_thread = 10;
  auto rows = sweep(base, {1, 2, 3}, BackendKind::HtOstm);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].threads == static_cast<int>(i) + 1);
    CHECK(rows[i].total_commits == (i + 1) * 10);
  }
  CHECK_THROWS_AS(sweep(base, {}, BackendKind::HtOstm),
                  std::invalid_argument);
}

TEST_CASE("sweep can record a history per run") {
  WorkloadSpec base = small_spec();
  base.txns_per_thread = 8;
  base.key_range = 16;
  const std::string stem = "bench_sweep_test.tmp";
  auto rows = sweep(base, {1, 2}, BackendKind::HtOstm, stem);
  REQUIRE(rows.size() == 2);
  for (int n : {1, 2}) {
    std::string path = stem + ".t" + std::to_string(n);
    History h = from_file(path);
    CHECK(h.well_formed());
    CHECK(check_co_opacity(h).co_opaque);
    std::remove(path.c_str());
  }
}
