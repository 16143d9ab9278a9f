// Writes a synthetic helpdesk-shaped event log for smoke runs of the pipeline.
#include "synthetic_log.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Synthetic ticket-process event log"};
  xnap::synth::Options options;
  std::string out = "-";
  app.add_option("--cases", options.cases, "number of cases")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", options.seed, "generator seed")->capture_default_str();
  app.add_option("--out", out, "output CSV, - for stdout")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const auto events = xnap::synth::helpdesk_like_events(options);
  if (out == "-") {
    xnap::synth::write_csv(std::cout, events);
    return 0;
  }
  std::ofstream f(out);
  if (!f) {
    std::cerr << "error: cannot write " << out << '\n';
    return 1;
  }
  xnap::synth::write_csv(f, events);
  return 0;
}
