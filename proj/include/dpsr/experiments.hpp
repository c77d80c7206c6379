#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dpsr/metrics.hpp"
#include "dpsr/report.hpp"
#include "dpsr/training.hpp"

namespace dpsr {

// Named set of HR evaluation images.
struct EvalSet {
  std::string name;
  std::vector<std::pair<std::string, Image>> images;
};

EvalSet load_eval_set(const std::string& name, const std::filesystem::path& hr_dir);
// Two small procedural sets ("toy5": 5 x 64x64, "toy_urban": 4 x 96x96).
std::vector<EvalSet> toy_eval_sets(uint64_t seed = 1000);

// Everything a run needs besides its TrainConfig.
struct ExperimentResources {
  Backbones backbones;
  std::shared_ptr<const TrainingSet> train;
  std::vector<EvalSet> eval_sets;
  std::shared_ptr<const PerceptualMetric> lpips;  // may be null
};

// G(lr) clamped to [0,1] and quantized to 8-bit levels.
Image super_resolve(Generator& generator, const Image& lr);

struct RunOutcome {
  std::string label;
  std::filesystem::path run_dir;
  bool ok = false;
  std::string error;
  std::vector<TableEntry> entries;  // one per eval set, method = label
  std::filesystem::path loss_log;
};

// Trains `config`, super-resolves every eval set and evaluates it. Writes
// <run_dir>/manifest.json (full config, seed, status), the training
// outputs, <run_dir>/sr/<set>/*.png and <run_dir>/eval/<set>.csv. Failures
// are returned, not thrown.
RunOutcome run_experiment(const TrainConfig& config, const std::string& label, const ExperimentResources& resources,
                          const std::filesystem::path& run_dir);

enum class SweepParameter { mu, beta_tap };

struct SweepSpec {
  SweepParameter parameter = SweepParameter::mu;
  std::vector<std::string> values;  // "0.5", "inf" / "beta_3_6"

  static std::vector<std::string> default_values(SweepParameter parameter);
  // TrainConfig for one value; throws ConfigError for an unusable value.
  TrainConfig apply(const TrainConfig& base, const std::string& value) const;
  std::string label(const std::string& value) const;
  std::string directory(const std::string& value) const;
  void validate() const;
};

struct SweepRow {
  std::string value;
  bool vgg_only_baseline = false;
  RunOutcome outcome;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::filesystem::path> tables;
};

// One run per value under <root>/<directory(value)>, then a comparison
// table at <root>/table.{csv,txt} and <root>/manifest.json. A failed run is
// recorded and the sweep moves on.
SweepResult run_sweep(const SweepSpec& spec, const TrainConfig& base, const ExperimentResources& resources,
                      const std::filesystem::path& root);

struct AblationArm {
  std::string name;  // directory name
  std::string label;
  TrainConfig config;
};

// VGG only (mu = inf), VGG + ResNet with zeta fixed at 1, and VGG + ResNet
// with dynamic zeta.
std::vector<AblationArm> ablation_arms(const TrainConfig& base);
SweepResult run_ablation(const TrainConfig& base, const ExperimentResources& resources,
                         const std::filesystem::path& root);

// Residual-trunk generator at the same width: 16 blocks for the full-size
// generator, otherwise the same block count.
GeneratorConfig srgan_variant(const GeneratorConfig& esrgan);

struct CorrelationResult {
  SweepResult srgan;
  SweepResult esrgan;
  std::filesystem::path rank_order;
};

// The four loss configurations (mu = inf; mu = 1 with beta_1_3; mu = 10
// with beta_1_3; mu = 0.5 with beta_3_6) trained on both generator presets.
// <root>/rank_order.csv lists, per dataset and metric, each preset's
// ordering of the configurations and whether the orderings agree.
CorrelationResult run_correlation(const TrainConfig& base, const ExperimentResources& resources,
                                  const std::filesystem::path& root);

// Per-channel activation maps for a single RGB image, min-max normalized to
// 8-bit grayscale and written as <out_dir>/<tap>_c<channel>.png. Channels
// are zero-based; an index >= C throws ValidationError.
std::vector<std::filesystem::path> dump_feature_channels(const Image& image, const std::vector<FeatureTap>& taps,
                                                         const std::vector<int64_t>& channels,
                                                         const Backbones& backbones,
                                                         const std::filesystem::path& out_dir);

// Min-max normalization of one (H,W) map; a constant map becomes all zeros.
Image normalize_channel(const torch::Tensor& map);

}  // namespace dpsr
