#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xnap {

/// Raised for malformed input files. `line` is 1-based, 0 when not tied to a row.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
  std::size_t line;
};

/// Bad column mapping or other setup problem.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Event {
  std::string case_id;
  std::string activity;
  std::int64_t timestamp = 0;  // epoch seconds, UTC
};

struct Case {
  std::string case_id;
  std::vector<Event> events;  // nondecreasing timestamps
};

struct EventLog {
  std::vector<Case> cases;          // in order of first appearance in the file
  std::vector<std::string> activities;  // index -> label, first-appearance order
  std::map<std::string, std::size_t> vocabulary;  // label -> index
  std::size_t max_case_length = 0;  // k
  std::size_t event_count = 0;

  std::size_t activity_count() const { return activities.size(); }
  std::size_t case_count() const { return cases.size(); }
};

struct ColumnMap {
  std::string case_column = "case";
  std::string activity_column = "activity";
  std::string timestamp_column = "timestamp";
};

/// Indices into EventLog::cases.
struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

enum class PrefixPurpose { train, eval };

struct PrefixRecord {
  std::size_t case_index = 0;
  std::size_t length = 0;              // number of events in the prefix
  std::size_t target_activity = 0;     // activity index, or activity_count() for EOS
  std::int64_t target_time_delta = 0;  // seconds to the next event, 0 for EOS
};

/// ISO-8601 (`YYYY-MM-DD[T ]HH:MM:SS[.frac][Z|+HH:MM]`, `/` also accepted as
/// date separator) or an integer epoch. Throws std::invalid_argument.
std::int64_t parse_timestamp(std::string_view text);

/// Splits one CSV record honoring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

EventLog parse_csv(std::istream& in, const ColumnMap& columns);
EventLog parse_csv(const std::filesystem::path& path, const ColumnMap& columns);

/// Builds an EventLog from events already in file order.
EventLog build_log(std::span<const Event> events);

SplitSpec split_chronological(const EventLog& log);

std::vector<PrefixRecord> generate_prefixes(const EventLog& log, std::span<const std::size_t> cases,
                                            PrefixPurpose purpose);

}  // namespace xnap
