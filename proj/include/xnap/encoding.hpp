#pragma once

#include "xnap/eventlog.hpp"
#include "xnap/neural/types.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace xnap {

/// One prefix laid out as k rows (time steps) by |A|+5 columns, row-major so
/// that feature (r, c) sits at flat index r * width + c.
using Grid = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Index kExtraFeatures = 5;

/// Column roles, counted from the first column after the activity one-hot block.
enum class ExtraColumn : Index {
  event_index = 0,
  since_first = 1,
  since_previous = 2,
  since_midnight = 3,
  weekday = 4,
};

struct EncodingSpec {
  std::vector<std::string> activities;  // |A| labels, index order
  Index steps = 0;                      // k
  double mean_since_first = 1.0;        // seconds
  double mean_since_prev = 1.0;         // seconds

  Index activity_count() const { return static_cast<Index>(activities.size()); }
  Index width() const { return activity_count() + kExtraFeatures; }
  Index feature_count() const { return steps * width(); }
  Index class_count() const { return activity_count() + 1; }
  Index eos_class() const { return activity_count(); }
  Index column(ExtraColumn c) const { return activity_count() + static_cast<Index>(c); }

  Index flat_index(Index row, Index col) const { return row * width() + col; }
  std::pair<Index, Index> unflatten(Index flat) const { return {flat / width(), flat % width()}; }

  /// Human-readable name of a column, e.g. "activity=Closed" or "time since first event".
  std::string column_name(Index col) const;

  bool operator==(const EncodingSpec&) const = default;
};

/// Thrown when an instance or checkpoint does not match the expected encoding.
struct SpecMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require_same_spec(const EncodingSpec& expected, const EncodingSpec& actual);

struct EncodedInstance {
  Grid x;
  Index target_activity = 0;        // 0..|A|, |A| = EOS
  double target_time_delta = 0.0;   // seconds / mean_since_prev
  Index prefix_length = 0;
  Index first_real_row = 0;         // rows [0, first_real_row) are left padding
  std::vector<Index> forced;        // flat indices of every row's event-index feature
  std::size_t case_index = 0;

  bool is_dummy_row(Index r) const { return r < first_real_row; }
};

/// Means of time-since-first and time-since-previous over every real event of
/// every training prefix; a zero mean is replaced by 1.
std::pair<double, double> fit_normalizers(const EventLog& log, std::span<const PrefixRecord> train_prefixes);

EncodingSpec make_encoding_spec(const EventLog& log, std::span<const PrefixRecord> train_prefixes);

/// Flat indices of the event-index feature for all k rows.
std::vector<Index> forced_features(const EncodingSpec& spec);

EncodedInstance encode_prefix(const EventLog& log, const PrefixRecord& prefix, const EncodingSpec& spec);

std::vector<EncodedInstance> encode_all(const EventLog& log, std::span<const PrefixRecord> prefixes,
                                        const EncodingSpec& spec);

/// Seconds since 00:00 UTC of the same day, and weekday with Monday = 0.
std::int64_t seconds_since_midnight(std::int64_t epoch);
int weekday_monday0(std::int64_t epoch);

}  // namespace xnap
