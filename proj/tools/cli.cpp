#include "cli.hpp"

#include "xnap/dataset.hpp"
#include "xnap/eval.hpp"
#include "xnap/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace xnap::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Runtime failure reported as `error: <message>` with exit code 1.
struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  std::string data;
  std::string out = "runs";
  std::string case_column = "case";
  std::string activity_column = "activity";
  std::string timestamp_column = "timestamp";
  std::uint64_t seed = 42;
  std::string mode = "baseline";
  double lr = 0.002;
  double xi = 0.0;
  double lambda = 1.0;
  double tau = 0.5;
  Index batch_size = 64;
  int epochs = 150;
  int patience = 20;
  Index hidden = 100;
  double dropout = 0.2;
  std::string grid = "full";
  std::string method = "selfexplain";
  std::size_t limit = 200;
  double timeout = 600.0;
  double delta = 0.95;
  int samples = 100;
  double precision = 0.95;
  int beam_width = 1;
  unsigned threads = 1;
  std::string checkpoint;
  std::string label;

  std::uint64_t anchor_seed() const { return derive_seed(seed, 0xa5c4); }
  std::uint64_t verify_seed() const { return derive_seed(seed, 0x5e71); }

  std::map<std::string, std::string> echo() const {
    auto d = [](double v) {
      char buf[64];
      const auto r = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, r.ptr);
    };
    return {{"settings.data", data},
            {"settings.out", out},
            {"settings.case_column", case_column},
            {"settings.activity_column", activity_column},
            {"settings.timestamp_column", timestamp_column},
            {"settings.seed", std::to_string(seed)},
            {"settings.mode", mode},
            {"settings.lr", d(lr)},
            {"settings.xi", d(xi)},
            {"settings.lambda", d(lambda)},
            {"settings.tau", d(tau)},
            {"settings.batch_size", std::to_string(batch_size)},
            {"settings.epochs", std::to_string(epochs)},
            {"settings.patience", std::to_string(patience)},
            {"settings.hidden", std::to_string(hidden)},
            {"settings.dropout", d(dropout)},
            {"settings.grid", grid},
            {"settings.method", method},
            {"settings.limit", std::to_string(limit)},
            {"settings.timeout", d(timeout)},
            {"settings.delta", d(delta)},
            {"settings.samples", std::to_string(samples)},
            {"settings.precision", d(precision)},
            {"settings.beam_width", std::to_string(beam_width)},
            {"settings.threads", std::to_string(threads)},
            {"settings.checkpoint", checkpoint},
            {"settings.label", label},
            {"settings.anchor_seed", std::to_string(anchor_seed())},
            {"settings.verify_seed", std::to_string(verify_seed())}};
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.mode = train_mode_from_string(mode);
    c.learning_rate = lr;
    c.xi = xi;
    c.lambda = lambda;
    c.tau = tau;
    c.batch_size = batch_size;
    c.max_epochs = epochs;
    c.patience = patience;
    c.seed = seed;
    c.hidden = hidden;
    c.dropout = dropout;
    c.validate();
    return c;
  }

  VerifyConfig verify_config() const { return {delta, samples, verify_seed()}; }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CommandError("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CommandError("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw CommandError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

fs::path prepared_path(const Settings& s) { return fs::path(s.out) / "prepared.json"; }

EventLog read_log(const std::string& data, const ColumnMap& columns) {
  if (data.empty()) throw CommandError("no dataset given; set --data");
  if (!fs::exists(data)) throw CommandError("dataset not found: " + data);
  try {
    return parse_csv(fs::path(data), columns);
  } catch (const ConfigError& e) {
    throw CommandError(std::string(e.what()) + " (set --case-column, --activity-column or --timestamp-column)");
  } catch (const ParseError& e) {
    throw CommandError(data + ":" + std::to_string(e.line) + ": " + e.what());
  }
}

json spec_json(const EncodingSpec& spec) {
  return {{"activities", spec.activities},
          {"steps", spec.steps},
          {"mean_since_first", spec.mean_since_first},
          {"mean_since_prev", spec.mean_since_prev}};
}

EncodingSpec spec_from_json(const json& j) {
  EncodingSpec s;
  s.activities = j.at("activities").get<std::vector<std::string>>();
  s.steps = j.at("steps").get<Index>();
  s.mean_since_first = j.at("mean_since_first").get<double>();
  s.mean_since_prev = j.at("mean_since_prev").get<double>();
  return s;
}

PreparedData load_prepared(const Settings& s) {
  const fs::path path = prepared_path(s);
  if (!fs::exists(path)) throw CommandError("no prepared data in " + s.out + "; run `prepare` first");
  const json j = read_json(path);
  try {
    const auto& cols = j.at("columns");
    ColumnMap columns{cols.at("case").get<std::string>(), cols.at("activity").get<std::string>(),
                      cols.at("timestamp").get<std::string>()};
    const std::string data = s.data.empty() ? j.at("data").get<std::string>() : s.data;
    SplitSpec split;
    split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
    split.validation = j.at("split").at("validation").get<std::vector<std::size_t>>();
    split.test = j.at("split").at("test").get<std::vector<std::size_t>>();
    return prepare_data(read_log(data, columns), std::move(split), spec_from_json(j.at("spec")));
  } catch (const json::exception& e) {
    throw CommandError("malformed " + path.string() + ": " + e.what());
  }
}

Checkpoint load_model(const Settings& s) {
  if (s.checkpoint.empty()) throw CommandError("no checkpoint given; set --checkpoint");
  if (!fs::exists(s.checkpoint)) throw CommandError("checkpoint not found: " + s.checkpoint);
  return load_checkpoint(s.checkpoint);
}

std::string label_of(const Settings& s) {
  if (!s.label.empty()) return s.label;
  return s.method + "-" + fs::path(s.checkpoint).stem().string();
}

fs::path explanations_path(const Settings& s, const std::string& label) {
  return fs::path(s.out) / ("explanations-" + label + ".json");
}

fs::path report_path(const Settings& s, const std::string& label) {
  return fs::path(s.out) / ("report-" + label + ".json");
}

std::span<const EncodedInstance> first_n(const std::vector<EncodedInstance>& v, std::size_t n) {
  return std::span<const EncodedInstance>(v).first(std::min(v.size(), n));
}

void write_manifest(const fs::path& path, std::map<std::string, std::string> kv, const Settings& s,
                    const std::string& command) {
  kv.merge(s.echo());
  kv["command"] = command;
  write_text(path, format_key_values(kv));
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_prepare(const Settings& s, std::ostream& out) {
  const ColumnMap columns{s.case_column, s.activity_column, s.timestamp_column};
  PreparedData d = prepare_data(read_log(s.data, columns));
  const json j = {{"format", 1},
                  {"data", s.data},
                  {"columns", {{"case", columns.case_column},
                               {"activity", columns.activity_column},
                               {"timestamp", columns.timestamp_column}}},
                  {"split", {{"train", d.split.train}, {"validation", d.split.validation}, {"test", d.split.test}}},
                  {"spec", spec_json(d.spec)}};
  write_text(prepared_path(s), j.dump(1) + "\n");

  std::map<std::string, std::string> kv = {
      {"log.cases", std::to_string(d.log.case_count())},
      {"log.events", std::to_string(d.log.event_count)},
      {"log.activities", std::to_string(d.log.activity_count())},
      {"log.max_case_length", std::to_string(d.log.max_case_length)},
      {"split.train_cases", std::to_string(d.split.train.size())},
      {"split.validation_cases", std::to_string(d.split.validation.size())},
      {"split.test_cases", std::to_string(d.split.test.size())},
      {"prefixes.train", std::to_string(d.train.size())},
      {"prefixes.validation", std::to_string(d.validation.size())},
      {"prefixes.test", std::to_string(d.test.size())},
      {"spec.mean_since_first", std::to_string(d.spec.mean_since_first)},
      {"spec.mean_since_prev", std::to_string(d.spec.mean_since_prev)},
  };
  write_manifest(fs::path(s.out) / "prepare.manifest", kv, s, "prepare");
  out << "prepared " << s.data << ": " << d.log.case_count() << " cases, " << d.log.event_count << " events, |A|="
      << d.log.activity_count() << ", k=" << d.log.max_case_length << "; prefixes train/validation/test = "
      << d.train.size() << "/" << d.validation.size() << "/" << d.test.size() << '\n';
}

void save_with_manifest(const Checkpoint& ckpt, const fs::path& path, const PreparedData& d, const Settings& s,
                        const std::string& command, std::map<std::string, std::string> extra = {}) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(ckpt, path);
  auto kv = run_manifest(ckpt);
  kv.merge(extra);
  kv["checkpoint.path"] = path.string();
  kv["eval.test_accuracy"] = pct(accuracy(ckpt.params, d.test));
  write_manifest(fs::path(path.string() + ".manifest"), kv, s, command);
}

void cmd_train(const Settings& s, std::ostream& out) {
  const TrainConfig config = s.train_config();
  const PreparedData d = load_prepared(s);
  const FeatureSampler sampler = FeatureSampler::fit(d.spec, d.train);
  const Checkpoint ckpt = fit(d.train, d.validation, d.spec, sampler, config);
  const fs::path path = s.checkpoint.empty() ? fs::path(s.out) / ("model-" + s.mode + ".ckpt") : fs::path(s.checkpoint);
  save_with_manifest(ckpt, path, d, s, "train");
  const auto& best = ckpt.history[static_cast<std::size_t>(ckpt.best_epoch - 1)];
  out << "trained " << s.mode << " model (lr=" << s.lr << ", xi=" << s.xi << "): best epoch " << ckpt.best_epoch
      << " of " << ckpt.history.size() << ", validation loss " << pct(ckpt.best_val_loss) << ", validation accuracy "
      << pct(best.val_accuracy) << ", test accuracy " << pct(accuracy(ckpt.params, d.test)) << " -> "
      << path.string() << '\n';
}

void cmd_gridsearch(const Settings& s, std::ostream& out) {
  TrainConfig base = s.train_config();
  base.mode = TrainMode::selfexplain;
  const GridMode mode = grid_mode_from_string(s.grid);
  const PreparedData d = load_prepared(s);
  const FeatureSampler sampler = FeatureSampler::fit(d.spec, d.train);
  GridOptions options;
  options.verify = s.verify_config();
  options.faithfulness_limit = s.limit;
  options.threads = s.threads;
  GridResult result = grid_search(d.train, d.validation, d.spec, sampler, base, mode, options);

  json cells = json::array();
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    cells.push_back({{"learning_rate", c.learning_rate},
                     {"xi", c.xi},
                     {"failed", c.failed},
                     {"error", c.error},
                     {"val_accuracy", c.val_accuracy},
                     {"val_faithfulness", c.val_faithfulness},
                     {"mean_size", c.mean_size},
                     {"best_epoch", c.best_epoch},
                     {"selected", i == result.selected}});
  }
  const json j = {{"grid", s.grid}, {"cells", cells}, {"selected", result.selected}};
  write_text(fs::path(s.out) / ("grid-" + s.grid + ".json"), j.dump(1) + "\n");

  const auto& sel = result.cells[result.selected];
  const fs::path path = s.checkpoint.empty() ? fs::path(s.out) / ("grid-" + s.grid + ".ckpt") : fs::path(s.checkpoint);
  save_with_manifest(*result.checkpoints[result.selected], path, d, s, "gridsearch",
                     {{"grid.mode", s.grid},
                      {"grid.cells", std::to_string(result.cells.size())},
                      {"grid.selected", std::to_string(result.selected)}});

  out << "grid " << s.grid << ": " << result.cells.size() << " cells\n";
  out << "  lr        xi        val_acc  val_faith  size     status\n";
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    char line[160];
    std::snprintf(line, sizeof line, "  %-8.0e  %-8.0e  %-7.4f  %-9.4f  %-7.2f  %s%s\n", c.learning_rate, c.xi,
                  c.val_accuracy, c.val_faithfulness, c.mean_size, c.failed ? "failed: " : "ok",
                  c.failed ? c.error.c_str() : (i == result.selected ? " (selected)" : ""));
    out << line;
  }
  out << "selected lr=" << sel.learning_rate << " xi=" << sel.xi << " -> " << path.string() << '\n';
}

void cmd_explain(const Settings& s, std::ostream& out) {
  const Method method = method_from_string(s.method);
  const Checkpoint ckpt = load_model(s);
  const PreparedData d = load_prepared(s);
  require_same_spec(d.spec, ckpt.spec);
  const auto instances = first_n(d.test, s.limit);
  if (instances.empty()) throw CommandError("the test split has no evaluation prefixes");

  std::vector<Explanation> explanations;
  if (method == Method::selfexplain) {
    if (!ckpt.params.shape.self_explaining)
      throw CommandError("checkpoint " + s.checkpoint + " has no explanation head; use --method posthoc");
    explanations = explain_selfexplaining(ckpt.params, instances, ckpt.config.tau);
  } else {
    AnchorConfig config;
    config.precision_threshold = s.precision;
    config.samples = s.samples;
    config.beam_width = s.beam_width;
    config.timeout_seconds = s.timeout;
    config.seed = s.anchor_seed();
    const auto params = std::make_shared<const NapModelParams<float>>(ckpt.params);
    explanations = explain_posthoc(make_classifier(params), instances, ckpt.sampler, config, s.threads);
  }

  const std::string label = label_of(s);
  json records = json::array();
  std::size_t timeouts = 0;
  for (const auto& e : explanations) {
    records.push_back(to_json(e));
    timeouts += !e.exists;
  }
  const json j = {{"label", label}, {"method", s.method}, {"checkpoint", s.checkpoint}, {"explanations", records}};
  write_text(explanations_path(s, label), j.dump(1) + "\n");
  write_manifest(fs::path(s.out) / ("explanations-" + label + ".manifest"),
                 {{"explain.instances", std::to_string(explanations.size())},
                  {"explain.timeouts", std::to_string(timeouts)}},
                 s, "explain");
  out << "explained " << explanations.size() << " test prefixes with " << s.method << " (" << timeouts
      << " timeouts) -> " << explanations_path(s, label).string() << '\n';
}

void cmd_verify(const Settings& s, std::ostream& out) {
  const Checkpoint ckpt = load_model(s);
  const PreparedData d = load_prepared(s);
  require_same_spec(d.spec, ckpt.spec);
  const std::string label = label_of(s);
  const fs::path epath = explanations_path(s, label);
  if (!fs::exists(epath)) throw CommandError("no explanations at " + epath.string() + "; run `explain` first");
  json j = read_json(epath);
  std::vector<Explanation> explanations;
  for (const auto& r : j.at("explanations")) explanations.push_back(explanation_from_json(r));
  if (explanations.empty()) throw CommandError(epath.string() + " holds no explanations");

  const auto params = std::make_shared<const NapModelParams<float>>(ckpt.params);
  const Classifier model = make_classifier(params);
  const VerifyConfig vc = s.verify_config();
  const auto verified = verify_all(model, d.test, explanations, ckpt.sampler, vc, s.threads);
  const EvalReport report = summarize(explanations, verified, accuracy(model, d.test), vc, label);

  json records = json::array();
  for (const auto& e : explanations) records.push_back(to_json(e));
  j["explanations"] = records;
  write_text(epath, j.dump(1) + "\n");
  write_text(report_path(s, label), to_json(report).dump(1) + "\n");
  write_manifest(fs::path(s.out) / ("report-" + label + ".manifest"),
                 {{"verify.delta", pct(vc.delta)}, {"verify.samples", std::to_string(vc.samples)}}, s, "verify");
  out << label << ": " << report.sufficient << "/" << report.instances << " sufficient (overall "
      << pct(report.overall_sufficiency) << ", existing " << pct(report.existing_rate) << ", mean size "
      << pct(report.mean_size) << ", mean seconds " << report.mean_seconds << ")\n";
}

void cmd_report(const Settings& s, std::ostream& out) {
  if (!fs::is_directory(s.out)) throw CommandError("results directory not found: " + s.out);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(s.out)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("report-") && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (files.empty()) throw CommandError("no reports in " + s.out + "; run `verify` first");
  std::sort(files.begin(), files.end());

  std::vector<EvalReport> reports;
  for (const auto& f : files) reports.push_back(report_from_json(read_json(f)));
  std::string text = format_report_tables(reports);

  if (fs::exists(prepared_path(s))) {
    const PreparedData d = load_prepared(s);
    for (const auto& r : reports) {
      const fs::path epath = explanations_path(s, r.label);
      if (!fs::exists(epath)) continue;
      const json j = read_json(epath);
      for (const auto& rec : j.at("explanations")) {
        const Explanation e = explanation_from_json(rec);
        if (!e.exists || e.instance >= d.test.size()) continue;
        text += "\nExample (" + r.label + ", test prefix " + std::to_string(e.instance) + ")\n";
        text += render_explanation(e, d.test[e.instance], d.spec);
        break;
      }
    }
  }
  write_text(fs::path(s.out) / "report.txt", text);
  out << text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Next-activity prediction with self-explaining LSTMs and post-hoc anchors"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);
  Settings s;

  app.add_option("--data", s.data, "event log CSV");
  app.add_option("--out", s.out, "results directory")->capture_default_str();
  app.add_option("--case-column", s.case_column, "CSV column holding the case id")->capture_default_str();
  app.add_option("--activity-column", s.activity_column, "CSV column holding the activity")->capture_default_str();
  app.add_option("--timestamp-column", s.timestamp_column, "CSV column holding the timestamp")->capture_default_str();
  app.add_option("--seed", s.seed, "master seed")->capture_default_str();
  app.add_option("--mode", s.mode, "training mode")->check(CLI::IsMember({"baseline", "selfexplain"}))->capture_default_str();
  app.add_option("--lr", s.lr, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--xi", s.xi, "cardinality loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--lambda", s.lambda, "faithfulness loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--tau", s.tau, "explanation threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--batch-size", s.batch_size, "mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--epochs", s.epochs, "maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--patience", s.patience, "early-stopping patience")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--hidden", s.hidden, "LSTM width")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--dropout", s.dropout, "dropout rate")->check(CLI::Range(0.0, 0.99))->capture_default_str();
  app.add_option("--grid", s.grid, "grid-search space")->check(CLI::IsMember({"full", "small"}))->capture_default_str();
  app.add_option("--method", s.method, "explanation method")
      ->check(CLI::IsMember({"selfexplain", "posthoc"}))
      ->capture_default_str();
  app.add_option("--limit", s.limit, "test prefixes to explain")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--timeout", s.timeout, "post-hoc search budget per instance, seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--delta", s.delta, "sufficiency threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--samples", s.samples, "samples per precision estimate")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--precision", s.precision, "post-hoc precision target")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--beam-width", s.beam_width, "post-hoc beam width")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--threads", s.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--checkpoint", s.checkpoint, "checkpoint path");
  app.add_option("--label", s.label, "result label (default: <method>-<checkpoint stem>)");

  using Command = void (*)(const Settings&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"prepare", "parse, split and encode a log", cmd_prepare},
      {"train", "train one model", cmd_train},
      {"gridsearch", "search learning rate x xi for the self-explaining model", cmd_gridsearch},
      {"explain", "explain the first --limit test prefixes", cmd_explain},
      {"verify", "check explanation sufficiency and write a report", cmd_verify},
      {"report", "print all reports in --out", cmd_report},
  };
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    for (const auto& [name, help, fn] : commands)
      if (app.got_subcommand(name)) fn(s, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace xnap::cli
