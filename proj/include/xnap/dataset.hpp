#pragma once

#include "xnap/encoding.hpp"
#include "xnap/eventlog.hpp"

#include <vector>

namespace xnap {

/// A parsed log with its chronological split and the encoded prefix sets.
/// Training prefixes start at length 1; validation and test prefixes at length 2.
struct PreparedData {
  EventLog log;
  SplitSpec split;
  EncodingSpec spec;
  std::vector<EncodedInstance> train;
  std::vector<EncodedInstance> validation;
  std::vector<EncodedInstance> test;
};

/// Splits the log and fits the normalizers on the training prefixes.
PreparedData prepare_data(EventLog log);

/// Re-encodes with a stored split and spec; throws SpecMismatch if they do not fit the log.
PreparedData prepare_data(EventLog log, SplitSpec split, EncodingSpec spec);

}  // namespace xnap
