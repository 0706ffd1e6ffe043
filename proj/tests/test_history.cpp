#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "ostm/history.hpp"

using namespace ostm;

namespace {

MethodRecord rec(Timestamp t, MethodKind k, std::uint64_t inv,
                 std::uint64_t lp, std::uint64_t rsp,
                 std::optional<Key> key = std::nullopt, Value v = kNil,
                 OpStatus st = OpStatus::Ok, ObjId obj = 0) {
  MethodRecord r;
  r.t_id = t;
  r.kind = k;
  r.obj = obj;
  r.key = key;
  r.value = v;
  r.status = st;
  r.inv_seq = inv;
  r.lp_seq = lp;
  r.rsp_seq = rsp;
  return r;
}

// T1: begin, insert(5)=50, commit. T2: begin, lookup(5) -> fail, abort.
History sample() {
  return History({
      rec(1, MethodKind::Begin, 1, 2, 3),
      rec(2, MethodKind::Begin, 4, 5, 6),
      rec(2, MethodKind::Lookup, 7, 8, 12, Key{5}, kNil, OpStatus::Fail),
      rec(1, MethodKind::Insert, 9, 10, 11, Key{5}, Value{50}),
      rec(1, MethodKind::TryCommit, 13, 14, 15, std::nullopt, kNil,
          OpStatus::Commit),
      rec(2, MethodKind::TryAbort, 16, 17, 18, std::nullopt, kNil,
          OpStatus::Abort),
  });
}

}  // namespace

TEST_CASE("construction sorts records by linearization point") {
  History h({
      rec(1, MethodKind::Insert, 9, 10, 11, Key{5}, Value{50}),
      rec(1, MethodKind::Begin, 1, 2, 3),
  });
  REQUIRE(h.size() == 2);
  CHECK(h.records()[0].kind == MethodKind::Begin);
  CHECK(h.records()[1].kind == MethodKind::Insert);
}

TEST_CASE("well-formed sample passes") {
  std::string why;
  CHECK_MESSAGE(sample().well_formed(&why), why);
}

TEST_CASE("well-formedness rejections") {
  std::string why;
  SUBCASE("duplicate lp") {
    History h({rec(1, MethodKind::Begin, 1, 2, 3),
               rec(2, MethodKind::Begin, 1, 2, 3)});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("duplicate lp") != std::string::npos);
  }
  SUBCASE("lp outside its method's span") {
    History h({rec(1, MethodKind::Begin, 2, 1, 3)});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("lp outside") != std::string::npos);
  }
  SUBCASE("method before begin") {
    History h({rec(1, MethodKind::Lookup, 1, 2, 3, Key{5})});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("before BEGIN") != std::string::npos);
  }
  SUBCASE("second begin") {
    History h({rec(1, MethodKind::Begin, 1, 2, 3),
               rec(1, MethodKind::Begin, 4, 5, 6)});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("second BEGIN") != std::string::npos);
  }
  SUBCASE("method after a commit") {
    History h({rec(1, MethodKind::Begin, 1, 2, 3),
               rec(1, MethodKind::TryCommit, 4, 5, 6, std::nullopt, kNil,
                   OpStatus::Commit),
               rec(1, MethodKind::Lookup, 7, 8, 9, Key{5})});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("after terminal") != std::string::npos);
  }
  SUBCASE("method after an aborting method") {
    History h({rec(1, MethodKind::Begin, 1, 2, 3),
               rec(1, MethodKind::Lookup, 4, 5, 6, Key{5}, kNil,
                   OpStatus::Abort),
               rec(1, MethodKind::Lookup, 7, 8, 9, Key{5})});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("after terminal") != std::string::npos);
  }
  SUBCASE("key on a keyless method") {
    History h({rec(1, MethodKind::Begin, 1, 2, 3),
               rec(1, MethodKind::TryCommit, 4, 5, 6, Key{5}, kNil,
                   OpStatus::Commit)});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("key presence") != std::string::npos);
  }
  SUBCASE("keyed method without a key") {
    History h({rec(1, MethodKind::Begin, 1, 2, 3),
               rec(1, MethodKind::Insert, 4, 5, 6)});
    CHECK_FALSE(h.well_formed(&why));
    CHECK(why.find("key presence") != std::string::npos);
  }
}

TEST_CASE("text round-trip preserves the history") {
  History h = sample();
  std::string text = to_text(h);
  History back = from_text(text);
  CHECK(back == h);

  // spot-check the format itself
  CHECK(text.rfind("ostm-history v1\n", 0) == 0);
  CHECK(text.find("2\t1\t3\t1\tBEGIN\t-\t-\tnil\tOK\n") != std::string::npos);
  CHECK(text.find("10\t9\t11\t1\tINSERT\t0\t5\t50\tOK\n") !=
        std::string::npos);
  CHECK(text.find("14\t13\t15\t1\tTRYC\t-\t-\tnil\tCOMMIT\n") !=
        std::string::npos);
  CHECK(text.find("8\t7\t12\t2\tLOOKUP\t0\t5\tnil\tFAIL\n") !=
        std::string::npos);
}

TEST_CASE("file round-trip") {
  History h = sample();
  std::string path = "history_roundtrip.tsv";
  to_file(h, path);
  History back = from_file(path);
  CHECK(back == h);
  std::remove(path.c_str());
  CHECK_THROWS_AS(from_file("no_such_file.tsv"), std::runtime_error);
}

TEST_CASE("parse errors carry line numbers") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      from_text(text);
    } catch (const HistoryParseError& e) {
      return e.line;
    }
    return 0;
  };
  CHECK(line_of("") == 1);
  CHECK(line_of("some other header\n") == 1);
  CHECK(line_of("ostm-history v1\n\n") == 2);
  CHECK(line_of("ostm-history v1\n1\t2\t3\n") == 2);  // field count
  CHECK(line_of("ostm-history v1\n2\t1\t3\t1\tBEGIN\t-\t-\tnil\tOK\n"
                "5\t4\t6\t1\tWIBBLE\t-\t-\tnil\tOK\n") == 3);  // kind
  CHECK(line_of("ostm-history v1\n2\t1\t3\t1\tBEGIN\t-\t-\tnil\tMAYBE\n") ==
        2);  // status
  CHECK(line_of("ostm-history v1\nx\t1\t3\t1\tBEGIN\t-\t-\tnil\tOK\n") ==
        2);  // lp
  CHECK(line_of("ostm-history v1\n2\t1\t3\t1\tLOOKUP\t0\tabc\tnil\tOK\n") ==
        2);  // key
  CHECK(line_of("ostm-history v1\n2\t1\t3\t1\tLOOKUP\t0\t5\tzz\tOK\n") ==
        2);  // value
  CHECK(line_of("ostm-history v1\n2\t1\t3\t1\tLOOKUP\tq\t5\tnil\tOK\n") ==
        2);  // obj
}

TEST_CASE("real-time order relates only non-overlapping transactions") {
  // T1 spans 1..4, T3 spans 3..7 (overlaps T1 and T2), T2 spans 6..9
  History h({
      rec(1, MethodKind::Begin, 1, 2, 4),
      rec(3, MethodKind::Begin, 3, 5, 7),
      rec(2, MethodKind::Begin, 6, 8, 9),
  });
  auto order = real_time_order(h);
  REQUIRE(order.size() == 1);
  CHECK(order[0] == std::pair<Timestamp, Timestamp>{1, 2});
}

TEST_CASE("recorder accepts concurrent appends and unique sequence draws") {
  HistoryRecorder recorder;
  constexpr int kThreads = 8;
  constexpr int kPerThread = 500;
  std::vector<std::thread> ws;
  for (int w = 0; w < kThreads; ++w) {
    ws.emplace_back([&recorder, w] {
      for (int i = 0; i < kPerThread; ++i) {
        std::uint64_t inv = recorder.next_seq();
        std::uint64_t lp = recorder.next_seq();
        std::uint64_t rsp = recorder.next_seq();
        recorder.append(rec(w + 1, MethodKind::Begin, inv, lp, rsp));
      }
    });
  }
  for (auto& w : ws) w.join();
  CHECK(recorder.size() == kThreads * kPerThread);

  History h = recorder.snapshot();
  const auto& rs = h.records();
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(rs[i].inv_seq < rs[i].lp_seq);
    CHECK(rs[i].lp_seq < rs[i].rsp_seq);
    if (i > 0) CHECK(rs[i - 1].lp_seq < rs[i].lp_seq);
  }
}
