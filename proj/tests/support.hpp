#pragma once

#include "xnap/dataset.hpp"
#include "xnap/model.hpp"
#include "xnap/selfexplain.hpp"
#include "synthetic_log.hpp"

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace xnap;

inline std::int64_t utc(int y, unsigned m, unsigned d, int hh = 0, int mm = 0, int ss = 0) {
  using namespace std::chrono;
  const sys_days date{year{y} / month{m} / std::chrono::day{d}};
  return (date + hours{hh} + minutes{mm} + seconds{ss}).time_since_epoch().count();
}

/// Cases given as activity strings ("abc" = a, b, c), one hour apart, cases one day apart.
inline EventLog letter_log(const std::vector<std::string>& cases, std::int64_t start = 1262304000) {
  std::vector<Event> events;
  for (std::size_t c = 0; c < cases.size(); ++c)
    for (std::size_t i = 0; i < cases[c].size(); ++i)
      events.push_back({"c" + std::to_string(c), std::string(1, cases[c][i]),
                        start + static_cast<std::int64_t>(c) * 86400 + static_cast<std::int64_t>(i) * 3600});
  return build_log(events);
}

/// Instances with random grids of the right shape and random targets.
inline std::vector<EncodedInstance> random_instances(const EncodingSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedInstance> out(n);
  const auto forced = forced_features(spec);
  for (auto& inst : out) {
    inst.x = Grid::Zero(spec.steps, spec.width());
    for (Index r = 0; r < spec.steps; ++r)
      for (Index c = 0; c < spec.width(); ++c) inst.x(r, c) = static_cast<float>(uniform01(rng));
    inst.target_activity = static_cast<Index>(uniform01(rng) * static_cast<double>(spec.class_count()));
    inst.target_time_delta = uniform01(rng);
    inst.prefix_length = spec.steps;
    inst.forced = forced;
  }
  return out;
}

inline EncodingSpec small_spec(Index activities = 3, Index steps = 4) {
  EncodingSpec spec;
  for (Index a = 0; a < activities; ++a) spec.activities.push_back(std::string(1, static_cast<char>('a' + a)));
  spec.steps = steps;
  return spec;
}

/// Prepared ticket-process data of `cases` cases.
inline PreparedData synthetic_data(std::size_t cases, std::uint64_t seed = 1) {
  synth::Options o;
  o.cases = cases;
  o.seed = seed;
  const auto events = synth::helpdesk_like_events(o);
  return prepare_data(build_log(events));
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("xnap-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing
