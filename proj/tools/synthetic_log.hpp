#pragma once

#include "xnap/eventlog.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace xnap::synth {

/// A ticket-handling process with the vocabulary size and case-length cap of a
/// small helpdesk log. Each case carries a hidden type (quick, waiting,
/// anomaly) that shapes both its path and its pacing, so the next activity is
/// learnable from the prefix but not from the last event alone.
struct Options {
  std::size_t cases = 600;
  std::uint64_t seed = 1;
  std::int64_t start_epoch = 1262304000;  // 2010-01-01T00:00:00Z
  std::size_t max_length = 15;
};

inline constexpr std::size_t kActivities = 14;

std::vector<Event> helpdesk_like_events(const Options& options);

/// Header `Case ID,Activity,Complete Timestamp`, ISO timestamps, one row per event.
void write_csv(std::ostream& out, std::span<const Event> events);

}  // namespace xnap::synth
