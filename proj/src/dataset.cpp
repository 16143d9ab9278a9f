#include "xnap/dataset.hpp"

namespace xnap {

namespace {

void encode_parts(PreparedData& d) {
  const auto train = generate_prefixes(d.log, d.split.train, PrefixPurpose::train);
  const auto validation = generate_prefixes(d.log, d.split.validation, PrefixPurpose::eval);
  const auto test = generate_prefixes(d.log, d.split.test, PrefixPurpose::eval);
  d.train = encode_all(d.log, train, d.spec);
  d.validation = encode_all(d.log, validation, d.spec);
  d.test = encode_all(d.log, test, d.spec);
}

}  // namespace

PreparedData prepare_data(EventLog log) {
  PreparedData d;
  d.log = std::move(log);
  d.split = split_chronological(d.log);
  const auto train = generate_prefixes(d.log, d.split.train, PrefixPurpose::train);
  d.spec = make_encoding_spec(d.log, train);
  encode_parts(d);
  return d;
}

PreparedData prepare_data(EventLog log, SplitSpec split, EncodingSpec spec) {
  PreparedData d;
  d.log = std::move(log);
  d.split = std::move(split);
  d.spec = std::move(spec);
  const std::size_t n = d.log.case_count();
  for (const auto* part : {&d.split.train, &d.split.validation, &d.split.test})
    for (const std::size_t c : *part)
      if (c >= n) throw SpecMismatch("stored split refers to case " + std::to_string(c) + " but the log has " +
                                     std::to_string(n) + " cases");
  if (d.log.activities != d.spec.activities)
    throw SpecMismatch("activity vocabulary of the log differs from the stored encoding spec");
  encode_parts(d);
  return d;
}

}  // namespace xnap
