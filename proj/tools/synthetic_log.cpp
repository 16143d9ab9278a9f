#include "synthetic_log.hpp"

#include "xnap/neural/types.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace xnap::synth {

namespace {

enum Act : int {
  insert_ticket,
  assign_seriousness,
  take_in_charge,
  require_upgrade,
  wait,
  resolve_ticket,
  create_sw_anomaly,
  schedule_intervention,
  resolve_sw_anomaly,
  closed,
  verified,
  resolved,
  invalid,
  duplicate,
  end_of_case,
};

constexpr std::array<const char*, kActivities> kLabels = {
    "Insert ticket",      "Assign seriousness", "Take in charge ticket",   "Require upgrade",
    "Wait",               "Resolve ticket",     "Create SW anomaly",       "Schedule intervention",
    "Resolve SW anomaly", "Closed",             "VERIFIED",                "RESOLVED",
    "INVALID",            "DUPLICATE",
};

enum class Kind { quick, waiting, anomaly };

struct Choice {
  Act act;
  double weight;
};

Act pick(std::initializer_list<Choice> choices, Rng& rng) {
  double total = 0.0;
  for (const auto& c : choices) total += c.weight;
  double u = uniform01(rng) * total;
  for (const auto& c : choices) {
    if (u < c.weight) return c.act;
    u -= c.weight;
  }
  return std::prev(choices.end())->act;
}

Act next(Act a, Kind kind, int visits_wait, Rng& rng) {
  switch (a) {
    case insert_ticket:
      return assign_seriousness;
    case assign_seriousness:
      return kind == Kind::waiting ? pick({{take_in_charge, 0.5}, {wait, 0.4}, {require_upgrade, 0.1}}, rng)
                                   : pick({{take_in_charge, 0.9}, {require_upgrade, 0.1}}, rng);
    case take_in_charge:
      if (kind == Kind::anomaly) return pick({{create_sw_anomaly, 0.85}, {wait, 0.15}}, rng);
      if (kind == Kind::waiting && visits_wait < 2) return pick({{wait, 0.8}, {resolve_ticket, 0.2}}, rng);
      return pick({{resolve_ticket, 0.9}, {require_upgrade, 0.1}}, rng);
    case require_upgrade:
      return take_in_charge;
    case wait:
      return kind == Kind::anomaly ? create_sw_anomaly : pick({{take_in_charge, 0.6}, {resolve_ticket, 0.4}}, rng);
    case create_sw_anomaly:
      return pick({{schedule_intervention, 0.7}, {resolve_sw_anomaly, 0.3}}, rng);
    case schedule_intervention:
      return resolve_sw_anomaly;
    case resolve_sw_anomaly:
      return resolve_ticket;
    case resolve_ticket:
      return kind == Kind::quick ? pick({{closed, 0.95}, {resolved, 0.05}}, rng)
                                 : pick({{closed, 0.8}, {resolved, 0.15}, {invalid, 0.05}}, rng);
    case resolved:
      return closed;
    case closed:
      return kind == Kind::anomaly ? pick({{end_of_case, 0.7}, {verified, 0.3}}, rng)
                                   : pick({{end_of_case, 0.93}, {duplicate, 0.04}, {verified, 0.03}}, rng);
    case invalid:
      return closed;
    case verified:
    case duplicate:
      return end_of_case;
    case end_of_case:
      break;
  }
  return end_of_case;
}

/// Mean waiting time in seconds before `a`, scaled by case kind.
double mean_delay(Act a, Kind kind) {
  double base = 3600.0;
  switch (a) {
    case wait: base = 4.0 * 86400.0; break;
    case schedule_intervention:
    case resolve_sw_anomaly: base = 3.0 * 86400.0; break;
    case closed: base = 2.0 * 86400.0; break;
    case resolve_ticket: base = 0.5 * 86400.0; break;
    case assign_seriousness: base = 600.0; break;
    default: break;
  }
  return kind == Kind::quick ? base * 0.5 : kind == Kind::anomaly ? base * 1.5 : base;
}

double exponential(double mean, Rng& rng) { return -mean * std::log(1.0 - uniform01(rng)); }

std::string iso(std::int64_t epoch) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{epoch}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return buf;
}

}  // namespace

std::vector<Event> helpdesk_like_events(const Options& options) {
  Rng rng(derive_seed(options.seed, 0));
  std::vector<Event> events;
  double arrival = static_cast<double>(options.start_epoch);
  for (std::size_t c = 0; c < options.cases; ++c) {
    arrival += exponential(5400.0, rng);
    const double u = uniform01(rng);
    const Kind kind = u < 0.45 ? Kind::quick : u < 0.8 ? Kind::waiting : Kind::anomaly;
    const std::string id = "Case " + std::to_string(c + 1);

    Act a = uniform01(rng) < 0.1 ? insert_ticket : assign_seriousness;
    double t = arrival;
    int waits = 0;
    std::size_t length = 0;
    while (a != end_of_case) {
      events.push_back({id, kLabels[static_cast<std::size_t>(a)], static_cast<std::int64_t>(t)});
      ++length;
      waits += a == wait;
      Act n = next(a, kind, waits, rng);
      if (n != end_of_case && length + 1 >= options.max_length && n != closed) n = closed;
      if (length >= options.max_length) n = end_of_case;
      if (n != end_of_case) t += exponential(mean_delay(n, kind), rng);
      a = n;
    }
  }
  return events;
}

void write_csv(std::ostream& out, std::span<const Event> events) {
  out << "Case ID,Activity,Complete Timestamp\n";
  for (const auto& e : events) out << e.case_id << ',' << e.activity << ',' << iso(e.timestamp) << '\n';
}

}  // namespace xnap::synth
