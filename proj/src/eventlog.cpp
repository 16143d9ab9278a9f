#include "xnap/eventlog.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace xnap {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int read_int(std::string_view s, std::size_t pos, std::size_t len) {
  if (pos + len > s.size()) throw std::invalid_argument("truncated timestamp");
  const auto part = s.substr(pos, len);
  if (!all_digits(part)) throw std::invalid_argument("expected digits in timestamp");
  int v = 0;
  std::from_chars(part.data(), part.data() + part.size(), v);
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::int64_t parse_timestamp(std::string_view text) {
  const auto s = trim(text);
  if (s.empty()) throw std::invalid_argument("empty timestamp");

  if (all_digits(s) || (s.size() > 1 && s.front() == '-' && all_digits(s.substr(1)))) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("epoch out of range");
    return v;
  }

  // YYYY-MM-DD[T ]HH:MM:SS
  const int year = read_int(s, 0, 4);
  if (s.size() < 19 || (s[4] != '-' && s[4] != '/') || s[7] != s[4] || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':')
    throw std::invalid_argument("timestamp not in YYYY-MM-DDTHH:MM:SS form");
  const int month = read_int(s, 5, 2);
  const int day = read_int(s, 8, 2);
  const int hour = read_int(s, 11, 2);
  const int minute = read_int(s, 14, 2);
  const int second = read_int(s, 17, 2);

  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) throw std::invalid_argument("invalid calendar time");

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;  // fractional seconds are truncated
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    const char sign = s[pos];
    if (sign == 'Z' && pos + 1 == s.size()) {
      pos = s.size();
    } else if (sign == '+' || sign == '-') {
      const int oh = read_int(s, pos + 1, 2);
      std::size_t mpos = pos + 3;
      if (mpos < s.size() && s[mpos] == ':') ++mpos;
      const int om = read_int(s, mpos, 2);
      if (mpos + 2 != s.size()) throw std::invalid_argument("trailing characters after zone offset");
      offset = (sign == '+' ? 1 : -1) * (oh * 3600 + om * 60);
      pos = s.size();
    } else {
      throw std::invalid_argument("unrecognized timestamp suffix");
    }
  }

  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hour * 3600 + minute * 60 + second - offset;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

EventLog build_log(std::span<const Event> events) {
  EventLog log;
  std::unordered_map<std::string, std::size_t> case_slot;
  for (const auto& e : events) {
    auto [it, inserted] = case_slot.try_emplace(e.case_id, log.cases.size());
    if (inserted) log.cases.push_back(Case{e.case_id, {}});
    log.cases[it->second].events.push_back(e);
    if (log.vocabulary.try_emplace(e.activity, log.activities.size()).second) log.activities.push_back(e.activity);
  }
  for (auto& c : log.cases) {
    std::stable_sort(c.events.begin(), c.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    log.max_case_length = std::max(log.max_case_length, c.events.size());
  }
  log.event_count = events.size();
  return log;
}

EventLog parse_csv(std::istream& in, const ColumnMap& columns) {
  std::string line;
  std::size_t line_no = 0;

  // A record may continue over several physical lines inside quotes.
  auto read_record = [&](std::string& record) -> bool {
    record.clear();
    if (!std::getline(in, line)) return false;
    ++line_no;
    record = line;
    while (std::count(record.begin(), record.end(), '"') % 2 == 1 && std::getline(in, line)) {
      ++line_no;
      record += '\n';
      record += line;
    }
    return true;
  };

  std::string record;
  if (!read_record(record)) throw ParseError("empty log: no header row");
  if (record.size() >= 3 && static_cast<unsigned char>(record[0]) == 0xEF) record.erase(0, 3);  // UTF-8 BOM
  const auto header = split_csv_line(record);

  auto find_column = [&](const std::string& name, const char* role) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return i;
    throw ConfigError(std::string("missing ") + role + " column '" + name + "' in header");
  };
  const std::size_t case_col = find_column(columns.case_column, "case");
  const std::size_t act_col = find_column(columns.activity_column, "activity");
  const std::size_t ts_col = find_column(columns.timestamp_column, "timestamp");
  const std::size_t needed = std::max({case_col, act_col, ts_col}) + 1;

  std::vector<Event> events;
  while (read_record(record)) {
    const std::size_t record_line = line_no;
    if (trim(record).empty()) continue;
    const auto fields = split_csv_line(record);
    if (fields.size() < needed)
      throw ParseError("expected at least " + std::to_string(needed) + " fields, found " +
                           std::to_string(fields.size()),
                       record_line);
    Event e;
    e.case_id = std::string(trim(fields[case_col]));
    e.activity = std::string(trim(fields[act_col]));
    if (e.case_id.empty()) throw ParseError("empty case id", record_line);
    if (e.activity.empty()) throw ParseError("empty activity", record_line);
    try {
      e.timestamp = parse_timestamp(fields[ts_col]);
    } catch (const std::exception& ex) {
      throw ParseError("unparseable timestamp '" + fields[ts_col] + "': " + ex.what(), record_line);
    }
    if (e.timestamp < 0) throw ParseError("timestamp before 1970-01-01", record_line);
    events.push_back(std::move(e));
  }
  if (events.empty()) throw ParseError("empty log: no events after header");
  return build_log(events);
}

EventLog parse_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open event log '" + path.string() + "'");
  return parse_csv(in, columns);
}

SplitSpec split_chronological(const EventLog& log) {
  const std::size_t n = log.cases.size();
  if (n < 3) throw std::invalid_argument("split_chronological: need at least 3 cases, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return log.cases[a].events.front().timestamp < log.cases[b].events.front().timestamp;
  });

  const std::size_t pool = (2 * n + 2) / 3;  // ceil(2n/3)
  const std::size_t validation = std::max<std::size_t>(1, pool / 10);
  const std::size_t train = pool - validation;

  SplitSpec split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train));
  split.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(train),
                          order.begin() + static_cast<std::ptrdiff_t>(pool));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(pool), order.end());
  return split;
}

std::vector<PrefixRecord> generate_prefixes(const EventLog& log, std::span<const std::size_t> cases,
                                            PrefixPurpose purpose) {
  std::vector<PrefixRecord> out;
  const std::size_t eos = log.activity_count();
  const std::size_t first = purpose == PrefixPurpose::train ? 1 : 2;
  for (const std::size_t ci : cases) {
    const auto& events = log.cases.at(ci).events;
    for (std::size_t len = first; len <= events.size(); ++len) {
      PrefixRecord r;
      r.case_index = ci;
      r.length = len;
      if (len == events.size()) {
        r.target_activity = eos;
        r.target_time_delta = 0;
      } else {
        r.target_activity = log.vocabulary.at(events[len].activity);
        r.target_time_delta = events[len].timestamp - events[len - 1].timestamp;
      }
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace xnap
