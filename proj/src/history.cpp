#include "ostm/history.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ostm {

namespace {

constexpr const char* kFormatHeader = "ostm-history v1";

std::optional<MethodKind> kind_from_string(const std::string& s) {
  if (s == "BEGIN") return MethodKind::Begin;
  if (s == "LOOKUP") return MethodKind::Lookup;
  if (s == "INSERT") return MethodKind::Insert;
  if (s == "DELETE") return MethodKind::Delete;
  if (s == "TRYC") return MethodKind::TryCommit;
  if (s == "TRYA") return MethodKind::TryAbort;
  return std::nullopt;
}

std::optional<OpStatus> status_from_string(const std::string& s) {
  if (s == "ABORT") return OpStatus::Abort;
  if (s == "OK") return OpStatus::Ok;
  if (s == "FAIL") return OpStatus::Fail;
  if (s == "RETRY") return OpStatus::Retry;
  if (s == "COMMIT") return OpStatus::Commit;
  return std::nullopt;
}

}  // namespace

const char* to_string(MethodKind k) {
  switch (k) {
    case MethodKind::Begin: return "BEGIN";
    case MethodKind::Lookup: return "LOOKUP";
    case MethodKind::Insert: return "INSERT";
    case MethodKind::Delete: return "DELETE";
    case MethodKind::TryCommit: return "TRYC";
    case MethodKind::TryAbort: return "TRYA";
  }
  return "?";
}

History::History(std::vector<MethodRecord> records)
    : records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(),
            [](const MethodRecord& a, const MethodRecord& b) {
              return a.lp_seq < b.lp_seq;
            });
}

bool History::well_formed(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::set<std::uint64_t> lps;
  std::map<Timestamp, bool> begun;       // t_id -> seen Begin
  std::map<Timestamp, bool> terminated;  // t_id -> seen commit/abort
  for (const MethodRecord& r : records_) {
    if (!lps.insert(r.lp_seq).second)
      return fail("duplicate lp " + std::to_string(r.lp_seq));
    if (!(r.inv_seq < r.lp_seq && r.lp_seq < r.rsp_seq))
      return fail("lp outside inv..rsp for transaction " +
                  std::to_string(r.t_id));
    if (terminated[r.t_id])
      return fail("record after terminal method of transaction " +
                  std::to_string(r.t_id));
    if (r.kind == MethodKind::Begin) {
      if (begun[r.t_id])
        return fail("second BEGIN for transaction " + std::to_string(r.t_id));
      begun[r.t_id] = true;
    } else {
      if (!begun[r.t_id])
        return fail("method before BEGIN for transaction " +
                    std::to_string(r.t_id));
      bool has_key = r.key.has_value();
      bool wants_key = r.kind == MethodKind::Lookup ||
                       r.kind == MethodKind::Insert ||
                       r.kind == MethodKind::Delete;
      if (has_key != wants_key)
        return fail("key presence mismatch for " +
                    std::string(to_string(r.kind)));
      if (r.kind == MethodKind::TryAbort || r.status == OpStatus::Abort ||
          (r.kind == MethodKind::TryCommit && r.status == OpStatus::Commit)) {
        terminated[r.t_id] = true;
      }
    }
  }
  return true;
}

std::string to_text(const History& h) {
  std::ostringstream os;
  os << kFormatHeader << '\n';
  for (const MethodRecord& r : h.records()) {
    os << r.lp_seq << '\t' << r.inv_seq << '\t' << r.rsp_seq << '\t' << r.t_id
       << '\t' << to_string(r.kind) << '\t';
    if (r.kind == MethodKind::Begin || r.kind == MethodKind::TryCommit ||
        r.kind == MethodKind::TryAbort) {
      os << '-';
    } else {
      os << r.obj;
    }
    os << '\t';
    if (r.key.has_value())
      os << *r.key;
    else
      os << '-';
    os << '\t';
    if (r.value.has_value())
      os << *r.value;
    else
      os << "nil";
    os << '\t' << to_string(r.status) << '\n';
  }
  return os.str();
}

History from_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line))
    throw HistoryParseError(1, "empty input, expected header");
  ++line_no;
  if (line != kFormatHeader)
    throw HistoryParseError(1, "unrecognized header '" + line + "'");

  std::vector<MethodRecord> records;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) throw HistoryParseError(line_no, "blank line");
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 9)
      throw HistoryParseError(line_no, "expected 9 fields, got " +
                                           std::to_string(fields.size()));
    MethodRecord r;
    try {
      r.lp_seq = std::stoull(fields[0]);
      r.inv_seq = std::stoull(fields[1]);
      r.rsp_seq = std::stoull(fields[2]);
      r.t_id = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw HistoryParseError(line_no, "bad sequence number or id");
    }
    auto kind = kind_from_string(fields[4]);
    if (!kind) throw HistoryParseError(line_no, "bad kind '" + fields[4] + "'");
    r.kind = *kind;
    if (fields[5] != "-") {
      try {
        r.obj = std::stoull(fields[5]);
      } catch (const std::exception&) {
        throw HistoryParseError(line_no, "bad obj '" + fields[5] + "'");
      }
    }
    if (fields[6] != "-") {
      try {
        r.key = std::stoll(fields[6]);
      } catch (const std::exception&) {
        throw HistoryParseError(line_no, "bad key '" + fields[6] + "'");
      }
    }
    if (fields[7] != "nil") {
      try {
        r.value = std::stoll(fields[7]);
      } catch (const std::exception&) {
        throw HistoryParseError(line_no, "bad value '" + fields[7] + "'");
      }
    }
    auto status = status_from_string(fields[8]);
    if (!status)
      throw HistoryParseError(line_no, "bad status '" + fields[8] + "'");
    r.status = *status;
    records.push_back(std::move(r));
  }
  return History(std::move(records));
}

void to_file(const History& h, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << to_text(h);
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

History from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

std::vector<std::pair<Timestamp, Timestamp>> real_time_order(
    const History& h) {
  struct Span {
    std::uint64_t first_inv = UINT64_MAX;
    std::uint64_t last_rsp = 0;
  };
  std::map<Timestamp, Span> spans;
  for (const MethodRecord& r : h.records()) {
    Span& s = spans[r.t_id];
    s.first_inv = std::min(s.first_inv, r.inv_seq);
    s.last_rsp = std::max(s.last_rsp, r.rsp_seq);
  }
  std::vector<std::pair<Timestamp, Timestamp>> out;
  for (const auto& [i, si] : spans) {
    for (const auto& [j, sj] : spans) {
      if (i != j && si.last_rsp < sj.first_inv) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace ostm
