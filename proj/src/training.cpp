#include "xnap/training.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace xnap {

namespace {

constexpr char kMagic[8] = {'X', 'N', 'A', 'P', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[4] = {'X', 'E', 'N', 'D'};
constexpr Index kEvalBatch = 256;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

/// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("checkpoint: key '" + key + "' is not a number: " + s);
  }
  if (used != s.size()) throw FormatError("checkpoint: key '" + key + "' is not a number: " + s);
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw FormatError("checkpoint: key '" + key + "' is not an integer: " + s);
  }
  if (used != s.size()) throw FormatError("checkpoint: key '" + key + "' is not an integer: " + s);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint: metadata key '" + key + "' missing");
  return it->second;
}

// Little-endian byte writer / bounds-checked reader.
struct Writer {
  std::string out;
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { out.append(p, n); }
};

struct Reader {
  const std::string& in;
  std::size_t pos = 0;
  void need_bytes(std::size_t n) const {
    if (in.size() - pos < n) throw FormatError("checkpoint: truncated file");
  }
  template <typename T>
  T get() {
    need_bytes(sizeof(T));
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need_bytes(n);
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
  }
};

void check_instances(std::span<const EncodedInstance> set, const EncodingSpec& spec, const char* what) {
  if (set.empty()) throw std::invalid_argument(std::string("fit: empty ") + what + " set");
  for (const auto& inst : set) {
    if (inst.x.rows() != spec.steps || inst.x.cols() != spec.width())
      throw SpecMismatch(std::string("fit: ") + what + " instance shape does not match the encoding spec");
    if (inst.target_activity < 0 || inst.target_activity >= spec.class_count())
      throw SpecMismatch(std::string("fit: ") + what + " target outside the class range");
  }
}

struct Batch {
  Eigen::MatrixXf x;
  std::vector<Index> targets;
  Eigen::MatrixXf times;
};

Batch make_batch(std::span<const EncodedInstance* const> members) {
  Batch b;
  b.x = instances_to_flat(members);
  b.targets.reserve(members.size());
  b.times.resize(1, static_cast<Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) {
    b.targets.push_back(members[j]->target_activity);
    b.times(0, static_cast<Index>(j)) = static_cast<float>(members[j]->target_time_delta);
  }
  return b;
}

bool all_finite(const NapModelParams<float>& p) {
  bool ok = true;
  p.visit_trainable([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

std::string describe(const SennLossValues& v) {
  return "total=" + num(v.total) + " ce=" + num(v.ce) + " mae=" + num(v.mae) + " faith=" + num(v.faith) +
         " card=" + num(v.card);
}

/// Loss of one batch, gradients into `grads`, running statistics folded into `params`.
SennLossValues train_batch(NapModelParams<float>& params, NapModelParams<float>& grads, const Batch& b,
                           const FeatureSampler& sampler, const TrainConfig& config, Rng& primary, Rng& aux,
                           const BatchObserver& observer, BatchEvent& event) {
  if (config.mode == TrainMode::baseline) {
    ForwardCache<float> cache;
    ForwardOptions opt;
    opt.mode = Mode::train;
    const auto out = forward(params, flat_to_sequence<float>(b.x, params.shape.steps, params.shape.width()), opt,
                             &primary, &cache);
    auto loss = senn_losses<float>(out, Eigen::MatrixXf(), {}, b.targets, b.times, 0.0, 0.0);
    backward(params, cache, loss.first, grads);
    update_running_stats(params, cache);
    event.loss = loss.values;
    if (observer) observer(event);
    return loss.values;
  }
  const auto dp = dual_propagate<float>(params, b.x, config.tau, sampler, Mode::train, primary, aux);
  const auto values = selfexplain_gradients<float>(params, dp, b.targets, b.times, config.senn(), grads);
  update_running_stats(params, dp.first_cache);
  event.loss = values;
  event.dual = &dp;
  if (observer) observer(event);
  event.dual = nullptr;
  return values;
}

}  // namespace

std::string to_string(TrainMode m) { return m == TrainMode::baseline ? "baseline" : "selfexplain"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "baseline") return TrainMode::baseline;
  if (s == "selfexplain") return TrainMode::selfexplain;
  throw std::invalid_argument("unknown training mode '" + s + "' (expected baseline or selfexplain)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning rate must be > 0");
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw std::invalid_argument("xi must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

std::pair<double, double> validation_metrics(const NapModelParams<float>& params,
                                             std::span<const EncodedInstance> instances, const FeatureSampler& sampler,
                                             const TrainConfig& config) {
  if (instances.empty()) throw std::invalid_argument("validation_metrics: empty instance set");
  Rng unused(0);
  Rng aux(derive_seed(config.seed, 3));
  double loss = 0.0;
  std::size_t hits = 0;
  const Index k = params.shape.steps;
  const Index width = params.shape.width();
  for (std::size_t start = 0; start < instances.size(); start += static_cast<std::size_t>(kEvalBatch)) {
    const std::size_t count = std::min(instances.size() - start, static_cast<std::size_t>(kEvalBatch));
    std::vector<const EncodedInstance*> members;
    for (std::size_t j = 0; j < count; ++j) members.push_back(&instances[start + j]);
    const Batch b = make_batch(members);
    SennLossValues v;
    std::vector<Index> predicted;
    if (params.shape.self_explaining && config.mode == TrainMode::selfexplain) {
      const auto dp = dual_propagate<float>(params, b.x, config.tau, sampler, Mode::infer, unused, aux);
      v = senn_losses<float>(dp.first, dp.second.logits, dp.predicted, b.targets, b.times, config.lambda, config.xi)
              .values;
      predicted = dp.predicted;
    } else {
      ForwardOptions opt;
      opt.explanation_head = false;
      const auto out = forward(params, flat_to_sequence<float>(b.x, k, width), opt, nullptr);
      v = senn_losses<float>(out, Eigen::MatrixXf(), {}, b.targets, b.times, 0.0, 0.0).values;
      predicted = predict_classes(out.nap_probs);
    }
    loss += v.total * static_cast<double>(count);
    for (std::size_t j = 0; j < count; ++j) hits += predicted[j] == b.targets[j];
  }
  const double n = static_cast<double>(instances.size());
  return {loss / n, static_cast<double>(hits) / n};
}

Checkpoint fit(std::span<const EncodedInstance> train, std::span<const EncodedInstance> validation,
               const EncodingSpec& spec, const FeatureSampler& sampler, const TrainConfig& config,
               const BatchObserver& observer) {
  config.validate();
  check_instances(train, spec, "training");
  check_instances(validation, spec, "validation");
  const bool senn = config.mode == TrainMode::selfexplain;
  if (senn && sampler.width() != spec.width())
    throw SpecMismatch("fit: sampler width does not match the encoding spec");

  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.config = config;
  ckpt.sampler = sampler;

  const ModelShape shape = ModelShape::for_spec(spec, senn, config.hidden, config.dropout);
  NapModelParams<float> params = NapModelParams<float>::initialize(shape, config.seed);
  NapModelParams<float> grads = params.zeros_like();
  AdamState<float> adam;
  Rng primary(derive_seed(config.seed, 1));
  Rng aux(derive_seed(config.seed, 2));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  ckpt.params = params;
  ckpt.best_val_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(primary) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }

    double loss_sum = 0.0;
    double ce_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<const EncodedInstance*> members;
      members.reserve(count);
      for (std::size_t j = 0; j < count; ++j) members.push_back(&train[order[start + j]]);
      const Batch b = make_batch(members);

      grads.visit_all([](const std::string&, auto& t, bool) { t.setZero(); });
      BatchEvent event{epoch, batch_index, {}, nullptr};
      const SennLossValues v = train_batch(params, grads, b, sampler, config, primary, aux, observer, event);
      if (!std::isfinite(v.total) || !all_finite(grads))
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + " (lr=" + num(config.learning_rate) + ", xi=" +
                            num(config.xi) + "): " + describe(v));
      adam_step(params, grads, adam, config.learning_rate);
      loss_sum += v.total * static_cast<double>(count);
      ce_sum += v.ce * static_cast<double>(count);
    }

    const auto [val_loss, val_acc] = validation_metrics(params, validation, sampler, config);
    if (!std::isfinite(val_loss))
      throw TrainingError("validation loss is not finite at epoch " + std::to_string(epoch) +
                          " (lr=" + num(config.learning_rate) + ", xi=" + num(config.xi) + ")");
    const double n = static_cast<double>(train.size());
    ckpt.history.push_back({epoch, loss_sum / n, ce_sum / n, val_loss, val_acc});

    if (val_loss < ckpt.best_val_loss) {
      ckpt.best_val_loss = val_loss;
      ckpt.best_epoch = epoch;
      ckpt.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Key/value text

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (k.empty() || k.find_first_of("=\n\\") != std::string::npos)
      throw std::invalid_argument("key/value: invalid key '" + k + "'");
    out += k;
    out += '=';
    for (char c : v) {
      if (c == '\\') out += "\\\\";
      else if (c == '\n') out += "\\n";
      else if (c == '\r') out += "\\r";
      else out += c;
    }
    out += '\n';
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("key/value line " + std::to_string(number) + ": expected key=value");
    std::string key = line.substr(0, eq);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    key.erase(0, key.find_first_not_of(" \t"));
    if (key.empty()) throw std::invalid_argument("key/value line " + std::to_string(number) + ": empty key");
    std::string raw = line.substr(eq + 1);
    std::string value;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 1 < raw.size()) {
        const char c = raw[++i];
        value += c == 'n' ? '\n' : c == 'r' ? '\r' : c;
      } else {
        value += raw[i];
      }
    }
    kv[key] = value;
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

std::map<std::string, std::string> checkpoint_metadata(const Checkpoint& c) {
  std::map<std::string, std::string> kv;
  kv["spec.steps"] = std::to_string(c.spec.steps);
  kv["spec.mean_since_first"] = num(c.spec.mean_since_first);
  kv["spec.mean_since_prev"] = num(c.spec.mean_since_prev);
  kv["spec.activities"] = std::to_string(c.spec.activities.size());
  for (std::size_t i = 0; i < c.spec.activities.size(); ++i)
    kv["spec.activity." + std::to_string(i)] = c.spec.activities[i];

  const TrainConfig& t = c.config;
  kv["config.mode"] = to_string(t.mode);
  kv["config.learning_rate"] = num(t.learning_rate);
  kv["config.xi"] = num(t.xi);
  kv["config.lambda"] = num(t.lambda);
  kv["config.tau"] = num(t.tau);
  kv["config.batch_size"] = std::to_string(t.batch_size);
  kv["config.max_epochs"] = std::to_string(t.max_epochs);
  kv["config.patience"] = std::to_string(t.patience);
  kv["config.seed"] = std::to_string(t.seed);
  kv["config.hidden"] = std::to_string(t.hidden);
  kv["config.dropout"] = num(t.dropout);

  const auto& cols = c.sampler.columns();
  kv["sampler.columns"] = std::to_string(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const auto& s = cols[i];
    const char* kind = s.kind == ColumnKind::binary ? "binary" : s.kind == ColumnKind::forced ? "forced" : "continuous";
    kv["sampler.column." + std::to_string(i)] =
        std::string(kind) + "," + num(s.min) + "," + num(s.max) + "," + std::to_string(s.levels);
  }

  kv["model.self_explaining"] = c.params.shape.self_explaining ? "1" : "0";
  kv["train.best_epoch"] = std::to_string(c.best_epoch);
  kv["train.best_val_loss"] = num(c.best_val_loss);
  kv["train.epochs"] = std::to_string(c.history.size());
  for (std::size_t i = 0; i < c.history.size(); ++i) {
    const auto& h = c.history[i];
    kv["train.epoch." + std::to_string(i)] = std::to_string(h.epoch) + "," + num(h.train_loss) + "," +
                                             num(h.train_ce) + "," + num(h.val_loss) + "," + num(h.val_accuracy);
  }
  return kv;
}

void apply_metadata(const std::map<std::string, std::string>& kv, Checkpoint& c) {
  auto i64 = [&](const std::string& k) { return parse_int(need(kv, k), k); };
  auto f64 = [&](const std::string& k) { return parse_double(need(kv, k), k); };

  c.spec.steps = i64("spec.steps");
  c.spec.mean_since_first = f64("spec.mean_since_first");
  c.spec.mean_since_prev = f64("spec.mean_since_prev");
  const long long acts = i64("spec.activities");
  if (acts < 0 || c.spec.steps < 1) throw FormatError("checkpoint: invalid encoding spec");
  for (long long i = 0; i < acts; ++i) c.spec.activities.push_back(need(kv, "spec.activity." + std::to_string(i)));

  TrainConfig& t = c.config;
  try {
    t.mode = train_mode_from_string(need(kv, "config.mode"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  t.learning_rate = f64("config.learning_rate");
  t.xi = f64("config.xi");
  t.lambda = f64("config.lambda");
  t.tau = f64("config.tau");
  t.batch_size = i64("config.batch_size");
  t.max_epochs = static_cast<int>(i64("config.max_epochs"));
  t.patience = static_cast<int>(i64("config.patience"));
  {
    const std::string& s = need(kv, "config.seed");
    try {
      std::size_t used = 0;
      t.seed = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw FormatError("checkpoint: invalid seed " + s);
    }
  }
  t.hidden = i64("config.hidden");
  t.dropout = f64("config.dropout");

  std::vector<ColumnSampling> cols;
  const long long ncols = i64("sampler.columns");
  for (long long i = 0; i < ncols; ++i) {
    const std::string key = "sampler.column." + std::to_string(i);
    const auto parts = split(need(kv, key), ',');
    if (parts.size() != 4) throw FormatError("checkpoint: malformed " + key);
    ColumnSampling s;
    if (parts[0] == "binary") s.kind = ColumnKind::binary;
    else if (parts[0] == "forced") s.kind = ColumnKind::forced;
    else if (parts[0] == "continuous") s.kind = ColumnKind::continuous;
    else throw FormatError("checkpoint: unknown column kind in " + key);
    s.min = static_cast<float>(parse_double(parts[1], key));
    s.max = static_cast<float>(parse_double(parts[2], key));
    s.levels = static_cast<int>(parse_int(parts[3], key));
    cols.push_back(s);
  }
  try {
    c.sampler = ncols == 0 ? FeatureSampler() : FeatureSampler(std::move(cols));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }

  c.best_epoch = static_cast<int>(i64("train.best_epoch"));
  c.best_val_loss = f64("train.best_val_loss");
  const long long epochs = i64("train.epochs");
  for (long long i = 0; i < epochs; ++i) {
    const std::string key = "train.epoch." + std::to_string(i);
    const auto parts = split(need(kv, key), ',');
    if (parts.size() != 5) throw FormatError("checkpoint: malformed " + key);
    c.history.push_back({static_cast<int>(parse_int(parts[0], key)), parse_double(parts[1], key),
                         parse_double(parts[2], key), parse_double(parts[3], key), parse_double(parts[4], key)});
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(Checkpoint::format_version);
  const std::string meta = format_key_values(checkpoint_metadata(ckpt));
  w.put<std::uint64_t>(meta.size());
  w.bytes(meta.data(), meta.size());

  std::uint32_t sections = 0;
  ckpt.params.visit_all([&](const std::string&, const auto&, bool) { ++sections; });
  w.put<std::uint32_t>(sections);
  ckpt.params.visit_all([&](const std::string& name, const auto& t, bool) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint32_t>(2);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(t.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(t.cols()));
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) w.put<float>(t(r, c));
  });
  w.bytes(kTrailer, sizeof kTrailer);
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r{bytes};
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
    throw FormatError("checkpoint: bad magic, not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::format_version)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(Checkpoint::format_version) + ")");
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > bytes.size()) throw FormatError("checkpoint: truncated file");
  Checkpoint c;
  std::map<std::string, std::string> kv;
  try {
    kv = parse_key_values(r.bytes(static_cast<std::size_t>(meta_len)));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  apply_metadata(kv, c);

  ModelShape shape;
  try {
    c.config.validate();
    shape = ModelShape::for_spec(c.spec, need(kv, "model.self_explaining") == "1", c.config.hidden, c.config.dropout);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  // Shapes only; the draws are overwritten below.
  c.params = NapModelParams<float>::initialize(shape, 0);

  std::map<std::string, Eigen::MatrixXf> sections;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank < 1 || rank > 2) throw FormatError("checkpoint: section '" + name + "' has unsupported rank");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) dims[d] = r.get<std::uint64_t>();
    if (dims[0] > bytes.size() || dims[1] > bytes.size() || dims[0] * dims[1] * 4 > bytes.size() - r.pos)
      throw FormatError("checkpoint: truncated file");
    Eigen::MatrixXf m(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.get<float>();
    if (!sections.emplace(name, std::move(m)).second) throw FormatError("checkpoint: duplicate section '" + name + "'");
  }
  if (r.bytes(sizeof kTrailer) != std::string(kTrailer, sizeof kTrailer))
    throw FormatError("checkpoint: missing trailer");
  if (r.pos != bytes.size()) throw FormatError("checkpoint: trailing bytes after trailer");

  std::size_t used = 0;
  c.params.visit_all([&](const std::string& name, auto& t, bool) {
    const auto it = sections.find(name);
    if (it == sections.end()) throw FormatError("checkpoint: section '" + name + "' missing");
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
      throw FormatError("checkpoint: section '" + name + "' has the wrong shape");
    t = it->second;
    ++used;
  });
  if (used != sections.size()) throw FormatError("checkpoint: unexpected extra sections");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

std::map<std::string, std::string> run_manifest(const Checkpoint& ckpt) {
  auto kv = checkpoint_metadata(ckpt);
  // Activity labels and sampler ranges live in the checkpoint; the manifest keeps the audit fields.
  std::erase_if(kv, [](const auto& e) { return e.first.starts_with("sampler.column.") || e.first.starts_with("spec.activity."); });
  kv["model.parameters"] = std::to_string(ckpt.params.parameter_count());
  kv["checkpoint.format_version"] = std::to_string(Checkpoint::format_version);
  return kv;
}

// ---------------------------------------------------------------------------
// Grid search

std::string to_string(GridMode m) { return m == GridMode::full ? "full" : "small"; }

GridMode grid_mode_from_string(const std::string& s) {
  if (s == "full") return GridMode::full;
  if (s == "small") return GridMode::small;
  throw std::invalid_argument("unknown grid '" + s + "' (expected full or small)");
}

std::vector<double> grid_learning_rates() { return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}; }

std::vector<double> grid_xis(GridMode mode) {
  if (mode == GridMode::small) return {1e-9, 1e-10};
  return {1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10};
}

std::size_t select_cell(std::span<const GridCell> cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (c.failed) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = cells[*best];
    const bool better = c.val_accuracy != b.val_accuracy       ? c.val_accuracy > b.val_accuracy
                        : c.val_faithfulness != b.val_faithfulness ? c.val_faithfulness > b.val_faithfulness
                                                                   : c.mean_size < b.mean_size;
    if (better) best = i;
  }
  if (!best) throw std::runtime_error("grid search: every combination failed");
  return *best;
}

GridResult grid_search(std::span<const EncodedInstance> train, std::span<const EncodedInstance> validation,
                       const EncodingSpec& spec, const FeatureSampler& sampler, const TrainConfig& base, GridMode mode,
                       const GridOptions& options) {
  const std::vector<double> xis = options.xis.empty() ? grid_xis(mode) : options.xis;
  if (options.learning_rates.empty() || xis.empty()) throw std::invalid_argument("grid search: empty grid");
  if (validation.empty()) throw std::invalid_argument("grid search: empty validation set");

  GridResult result;
  for (double lr : options.learning_rates)
    for (double xi : xis) {
      GridCell cell;
      cell.learning_rate = lr;
      cell.xi = xi;
      result.cells.push_back(cell);
    }
  result.checkpoints.resize(result.cells.size());

  const auto faith_set = validation.first(std::min(validation.size(), options.faithfulness_limit));

  parallel_for(result.cells.size(), options.threads, [&](std::size_t i) {
    GridCell& cell = result.cells[i];
    TrainConfig config = base;
    config.mode = TrainMode::selfexplain;
    config.learning_rate = cell.learning_rate;
    config.xi = cell.xi;
    try {
      Checkpoint ckpt = fit(train, validation, spec, sampler, config);
      auto params = std::make_shared<const NapModelParams<float>>(ckpt.params);
      const Classifier model = make_classifier(params);
      cell.val_accuracy = accuracy(model, validation);
      auto explanations = explain_selfexplaining(*params, faith_set, config.tau);
      const auto verified = verify_all(model, faith_set, explanations, sampler, options.verify, 1);
      const auto report = summarize(explanations, verified, cell.val_accuracy, options.verify);
      cell.val_faithfulness = report.overall_sufficiency;
      cell.mean_size = report.mean_size;
      cell.best_epoch = ckpt.best_epoch;
      result.checkpoints[i] = std::move(ckpt);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  });

  result.selected = select_cell(result.cells);
  return result;
}

}  // namespace xnap
