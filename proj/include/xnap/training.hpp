#pragma once

#include "xnap/encoding.hpp"
#include "xnap/eval.hpp"
#include "xnap/model.hpp"
#include "xnap/selfexplain.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xnap {

enum class TrainMode { baseline, selfexplain };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::baseline;
  double learning_rate = 0.002;
  double xi = 0.0;
  double lambda = 1.0;
  double tau = 0.5;
  Index batch_size = 64;
  int max_epochs = 150;
  int patience = 20;
  std::uint64_t seed = 42;
  Index hidden = 100;
  double dropout = 0.2;

  void validate() const;
  SennSettings senn() const { return {tau, lambda, xi}; }
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_ce = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct Checkpoint {
  static constexpr std::uint32_t format_version = 1;

  EncodingSpec spec;
  TrainConfig config;
  FeatureSampler sampler;
  NapModelParams<float> params;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Training diverged (non-finite loss or gradient).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or incompatible checkpoint file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-batch hook; `dual` is set in self-explaining mode.
struct BatchEvent {
  int epoch = 0;
  std::size_t batch = 0;
  SennLossValues loss;
  const DualPass<float>* dual = nullptr;
};
using BatchObserver = std::function<void(const BatchEvent&)>;

/// Loss and accuracy of `params` on `instances` in inference mode. The
/// self-explaining faithfulness term draws from a generator reseeded from
/// config.seed on every call, so repeated calls agree.
std::pair<double, double> validation_metrics(const NapModelParams<float>& params, std::span<const EncodedInstance> instances,
                                             const FeatureSampler& sampler, const TrainConfig& config);

/// Mini-batch Adam on the joint loss, epoch-shuffled, early-stopped on validation
/// loss. Returns the parameters of the best validation epoch.
Checkpoint fit(std::span<const EncodedInstance> train, std::span<const EncodedInstance> validation,
               const EncodingSpec& spec, const FeatureSampler& sampler, const TrainConfig& config,
               const BatchObserver& observer = {});

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reproducibility record: seed, configuration, normalizers, metric history.
std::map<std::string, std::string> run_manifest(const Checkpoint& ckpt);
std::string format_key_values(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> parse_key_values(const std::string& text);

// ---------------------------------------------------------------------------
// Grid search

enum class GridMode { full, small };

std::string to_string(GridMode m);
GridMode grid_mode_from_string(const std::string& s);

std::vector<double> grid_learning_rates();
std::vector<double> grid_xis(GridMode mode);

struct GridOptions {
  std::vector<double> learning_rates = grid_learning_rates();
  std::vector<double> xis;  // empty = grid_xis(mode)
  VerifyConfig verify;
  std::size_t faithfulness_limit = 200;  // validation instances used for faithfulness
  unsigned threads = 1;
};

struct GridCell {
  double learning_rate = 0.0;
  double xi = 0.0;
  bool failed = false;
  std::string error;
  double val_accuracy = 0.0;
  double val_faithfulness = 0.0;
  double mean_size = 0.0;
  int best_epoch = 0;
};

struct GridResult {
  std::vector<GridCell> cells;  // learning-rate major
  std::size_t selected = 0;
  std::vector<std::optional<Checkpoint>> checkpoints;  // parallel to cells, empty when failed
};

/// Index of the best non-failed cell: highest accuracy, then faithfulness, then smaller size.
std::size_t select_cell(std::span<const GridCell> cells);

GridResult grid_search(std::span<const EncodedInstance> train, std::span<const EncodedInstance> validation,
                       const EncodingSpec& spec, const FeatureSampler& sampler, const TrainConfig& base, GridMode mode,
                       const GridOptions& options = {});

}  // namespace xnap
