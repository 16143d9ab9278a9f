#include "xnap/encoding.hpp"

#include <algorithm>

namespace xnap {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Index activity_index(const EncodingSpec& spec, const std::string& label) {
  const auto it = std::find(spec.activities.begin(), spec.activities.end(), label);
  if (it == spec.activities.end()) throw SpecMismatch("unknown activity '" + label + "'");
  return static_cast<Index>(it - spec.activities.begin());
}

}  // namespace

std::int64_t seconds_since_midnight(std::int64_t epoch) {
  return epoch - floor_div(epoch, kSecondsPerDay) * kSecondsPerDay;
}

int weekday_monday0(std::int64_t epoch) {
  // 1970-01-01 was a Thursday (Monday = 0 -> Thursday = 3).
  const std::int64_t days = floor_div(epoch, kSecondsPerDay);
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

std::string EncodingSpec::column_name(Index col) const {
  if (col < activity_count()) return "activity=" + activities[static_cast<std::size_t>(col)];
  switch (static_cast<ExtraColumn>(col - activity_count())) {
    case ExtraColumn::event_index: return "event index";
    case ExtraColumn::since_first: return "time since first event";
    case ExtraColumn::since_previous: return "time since previous event";
    case ExtraColumn::since_midnight: return "time since midnight";
    case ExtraColumn::weekday: return "weekday";
  }
  return "column " + std::to_string(col);
}

void require_same_spec(const EncodingSpec& expected, const EncodingSpec& actual) {
  if (expected.activities != actual.activities)
    throw SpecMismatch("encoding mismatch: activity vocabularies differ (" + std::to_string(expected.activity_count()) +
                       " vs " + std::to_string(actual.activity_count()) + " labels)");
  if (expected.steps != actual.steps)
    throw SpecMismatch("encoding mismatch: k = " + std::to_string(expected.steps) + " vs " +
                       std::to_string(actual.steps));
  if (expected.mean_since_first != actual.mean_since_first || expected.mean_since_prev != actual.mean_since_prev)
    throw SpecMismatch("encoding mismatch: normalizer means differ");
}

std::pair<double, double> fit_normalizers(const EventLog& log, std::span<const PrefixRecord> train_prefixes) {
  double sum_first = 0.0, sum_prev = 0.0;
  std::size_t n = 0;
  for (const auto& p : train_prefixes) {
    const auto& ev = log.cases.at(p.case_index).events;
    for (std::size_t j = 0; j < p.length; ++j) {
      sum_first += static_cast<double>(ev[j].timestamp - ev[0].timestamp);
      sum_prev += j == 0 ? 0.0 : static_cast<double>(ev[j].timestamp - ev[j - 1].timestamp);
      ++n;
    }
  }
  double mean_first = n ? sum_first / static_cast<double>(n) : 0.0;
  double mean_prev = n ? sum_prev / static_cast<double>(n) : 0.0;
  if (!(mean_first > 0.0)) mean_first = 1.0;
  if (!(mean_prev > 0.0)) mean_prev = 1.0;
  return {mean_first, mean_prev};
}

EncodingSpec make_encoding_spec(const EventLog& log, std::span<const PrefixRecord> train_prefixes) {
  EncodingSpec spec;
  spec.activities = log.activities;
  spec.steps = static_cast<Index>(log.max_case_length);
  std::tie(spec.mean_since_first, spec.mean_since_prev) = fit_normalizers(log, train_prefixes);
  return spec;
}

std::vector<Index> forced_features(const EncodingSpec& spec) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(spec.steps));
  for (Index r = 0; r < spec.steps; ++r) out.push_back(spec.flat_index(r, spec.column(ExtraColumn::event_index)));
  return out;
}

EncodedInstance encode_prefix(const EventLog& log, const PrefixRecord& prefix, const EncodingSpec& spec) {
  const auto& ev = log.cases.at(prefix.case_index).events;
  const auto len = static_cast<Index>(prefix.length);
  if (len > spec.steps)
    throw SpecMismatch("prefix length " + std::to_string(len) + " exceeds k = " + std::to_string(spec.steps));
  if (len < 1 || prefix.length > ev.size()) throw std::invalid_argument("encode_prefix: invalid prefix length");

  EncodedInstance inst;
  inst.x = Grid::Zero(spec.steps, spec.width());
  inst.prefix_length = len;
  inst.first_real_row = spec.steps - len;
  inst.case_index = prefix.case_index;
  inst.target_activity = static_cast<Index>(prefix.target_activity);
  inst.target_time_delta = static_cast<double>(prefix.target_time_delta) / spec.mean_since_prev;
  inst.forced = forced_features(spec);
  if (inst.target_activity < 0 || inst.target_activity > spec.eos_class())
    throw SpecMismatch("target class outside 0..|A|");

  for (Index j = 0; j < len; ++j) {
    const auto& e = ev[static_cast<std::size_t>(j)];
    const Index r = inst.first_real_row + j;
    inst.x(r, activity_index(spec, e.activity)) = 1.0f;
    inst.x(r, spec.column(ExtraColumn::event_index)) = static_cast<float>(j + 1);
    inst.x(r, spec.column(ExtraColumn::since_first)) =
        static_cast<float>(static_cast<double>(e.timestamp - ev[0].timestamp) / spec.mean_since_first);
    const double prev = j == 0 ? 0.0 : static_cast<double>(e.timestamp - ev[static_cast<std::size_t>(j - 1)].timestamp);
    inst.x(r, spec.column(ExtraColumn::since_previous)) = static_cast<float>(prev / spec.mean_since_prev);
    inst.x(r, spec.column(ExtraColumn::since_midnight)) =
        static_cast<float>(static_cast<double>(seconds_since_midnight(e.timestamp)) / kSecondsPerDay);
    inst.x(r, spec.column(ExtraColumn::weekday)) = static_cast<float>(weekday_monday0(e.timestamp) / 6.0);
  }
  return inst;
}

std::vector<EncodedInstance> encode_all(const EventLog& log, std::span<const PrefixRecord> prefixes,
                                        const EncodingSpec& spec) {
  std::vector<EncodedInstance> out;
  out.reserve(prefixes.size());
  for (const auto& p : prefixes) out.push_back(encode_prefix(log, p, spec));
  return out;
}

}  // namespace xnap
