#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dpsr/data_pipeline.hpp"
#include "dpsr/feature_extraction.hpp"
#include "dpsr/losses.hpp"
#include "dpsr/networks.hpp"

namespace dpsr {

struct TrainConfig {
  int64_t total_iterations = 400000;
  // The published recipe states 1e-2; 1e-4 is the stable default.
  double base_lr = 1e-4;
  std::vector<int64_t> lr_halve_milestones = {50000, 100000, 200000, 300000};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  int64_t batch_size = 16;
  int64_t hr_patch = 128;
  LossWeights loss_weights;
  ResnetWeighting resnet_weighting = ResnetWeighting::dynamic;
  FeatureTap vgg_tap = FeatureTap::vgg(5, 4);
  FeatureTap resnet_tap = FeatureTap::resnet(3, 6);
  uint64_t seed = 0;
  GeneratorConfig generator = GeneratorConfig::full();
  DiscriminatorConfig discriminator = DiscriminatorConfig::full();
  bool train_discriminator = true;
  // 0 disables periodic checkpoints; a final checkpoint is always written.
  int64_t checkpoint_interval = 5000;
  std::string vgg_weights = "weights/vgg19.dpsr";
  std::string resnet_weights = "weights/resnet50.dpsr";
  std::string train_dir = "data/train_tiles";

  // 400K iterations, batch 16, 128x128 HR patches, 23-block generator.
  static TrainConfig full_scale();
  // 500 iterations, batch 4, 32x32 HR patches, 4-block generator, 32x32
  // discriminator input; no LR milestones.
  static TrainConfig toy();

  int64_t scale() const { return generator.scale_factor; }
  void validate() const;
};

// base_lr * 0.5^(number of milestones <= iteration)
double schedule_lr(int64_t iteration, double base_lr, const std::vector<int64_t>& milestones);
double schedule_lr(int64_t iteration, const TrainConfig& config);

struct StepRecord {
  int64_t iteration = 0;
  DpLossBreakdown dp;
  double content = 0.0;
  double adversarial = 0.0;
  double total = 0.0;
  double discriminator = 0.0;  // NaN when the discriminator is frozen
  double lr = 0.0;

  bool operator==(const StepRecord&) const = default;
};

// Append-only CSV loss log. Columns:
//   iteration,l_vgg,l_res,zeta,weighted_res_term,l_dp,content,adversarial,total,discriminator,lr
// Reals are written with 17 significant digits so a log round-trips exactly.
class LossLog {
 public:
  static constexpr const char* kHeader =
      "iteration,l_vgg,l_res,zeta,weighted_res_term,l_dp,content,adversarial,total,discriminator,lr";

  LossLog(const std::filesystem::path& path, bool append);
  void append(const StepRecord& record);
  static std::string format(const StepRecord& record);
  static std::vector<StepRecord> read(const std::filesystem::path& path);

 private:
  std::ofstream out_;
};

struct Backbones {
  std::shared_ptr<const PretrainedBackbone> vgg;
  std::shared_ptr<const PretrainedBackbone> resnet;

  static Backbones load(const TrainConfig& config);
};

// Alternating RaGAN training: one discriminator update, then one generator
// update on lambda*content + eta*adversarial + gamma*dp.
class Trainer {
 public:
  Trainer(TrainConfig config, Backbones backbones);

  StepRecord step(const Batch& batch);

  int64_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  const Backbones& backbones() const { return backbones_; }

  // Generator, discriminator, both Adam states, iteration and config.
  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores state saved by a trainer with the same network configuration.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  Backbones backbones_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> g_optimizer_;
  std::unique_ptr<torch::optim::Adam> d_optimizer_;
  FeatureExtractor vgg_extractor_;
  FeatureExtractor resnet_extractor_;
  int64_t iteration_ = 0;
};

// Loads a generator from a checkpoint for inference.
Generator load_generator(const std::filesystem::path& checkpoint);

struct TrainingResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_log;
  std::vector<StepRecord> records;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Trains from trainer.iteration() to config.total_iterations, writing
// <out_dir>/loss_log.csv, <out_dir>/config.json and checkpoints under
// <out_dir>/checkpoints/.
TrainingResult run_training(Trainer& trainer, const TrainingSet& dataset, const std::filesystem::path& out_dir,
                            const StepCallback& on_step = {});
TrainingResult run_training(const TrainConfig& config, const TrainingSet& dataset,
                            const std::filesystem::path& out_dir,
                            const std::optional<std::filesystem::path>& resume = std::nullopt,
                            const StepCallback& on_step = {});

}  // namespace dpsr
