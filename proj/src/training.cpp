#include "dpsr/training.hpp"

#include <cmath>
#include <sstream>

#include "dpsr/archive.hpp"
#include "dpsr/config_io.hpp"
#include "dpsr/errors.hpp"
#include "dpsr/log.hpp"

namespace dpsr {
namespace {

void set_lr(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void set_requires_grad(torch::nn::Module& module, bool value) {
  for (auto& p : module.parameters()) p.set_requires_grad(value);
}

void store_adam(Archive& archive, const torch::optim::Adam& optimizer, const torch::nn::Module& module,
                const std::string& prefix) {
  const auto& state = optimizer.state();
  for (const auto& item : module.named_parameters()) {
    auto it = state.find(item.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    archive.put(prefix + item.key() + ".exp_avg", s.exp_avg());
    archive.put(prefix + item.key() + ".exp_avg_sq", s.exp_avg_sq());
    archive.put(prefix + item.key() + ".step", torch::tensor({s.step()}, torch::kInt64));
  }
}

void restore_adam(const Archive& archive, torch::optim::Adam& optimizer, torch::nn::Module& module,
                  const std::string& prefix) {
  auto& state = optimizer.state();
  state.clear();
  for (const auto& item : module.named_parameters()) {
    const auto key = prefix + item.key();
    if (!archive.contains(key + ".step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(archive.tensor(key + ".step").item<int64_t>());
    s->exp_avg(archive.tensor(key + ".exp_avg").clone());
    s->exp_avg_sq(archive.tensor(key + ".exp_avg_sq").clone());
    if (s->exp_avg().sizes() != item.value().sizes())
      throw LoadError("checkpoint: optimizer state shape mismatch for '" + key + "'");
    state[item.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

std::string describe(const StepRecord& r) {
  std::ostringstream s;
  s << "iteration " << r.iteration << ": l_vgg=" << r.dp.l_vgg << " l_res=" << r.dp.l_res << " zeta=" << r.dp.zeta
    << " l_dp=" << r.dp.l_dp << " content=" << r.content << " adversarial=" << r.adversarial
    << " discriminator=" << r.discriminator;
  return s.str();
}

}  // namespace

TrainConfig TrainConfig::full_scale() { return TrainConfig{}; }

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.total_iterations = 500;
  c.lr_halve_milestones = {};
  c.batch_size = 4;
  c.hr_patch = 32;
  c.generator = GeneratorConfig::toy();
  c.discriminator = DiscriminatorConfig{32, 16};
  c.checkpoint_interval = 0;
  c.train_dir = "data/toy";
  return c;
}

void TrainConfig::validate() const {
  loss_weights.validate();
  generator.validate();
  discriminator.validate();
  vgg_tap.validate();
  resnet_tap.validate();
  if (vgg_tap.backbone != BackboneKind::vgg19) throw ConfigError("vgg_tap must be a VGG19 tap");
  if (resnet_tap.backbone != BackboneKind::resnet50) throw ConfigError("resnet_tap must be a ResNet50 tap");
  if (total_iterations < 0) throw ConfigError("total_iterations must be non-negative");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0,1)");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (hr_patch < 1 || hr_patch % generator.scale_factor != 0)
    throw ConfigError("hr_patch must be a positive multiple of the scale factor");
  if (hr_patch != discriminator.input_size)
    throw ConfigError("hr_patch (" + std::to_string(hr_patch) + ") must equal the discriminator input size (" +
                      std::to_string(discriminator.input_size) + ")");
  for (std::size_t i = 1; i < lr_halve_milestones.size(); ++i)
    if (lr_halve_milestones[i] <= lr_halve_milestones[i - 1])
      throw ConfigError("lr_halve_milestones must be strictly increasing");
  if (!lr_halve_milestones.empty() && lr_halve_milestones.back() >= total_iterations)
    log::warn("LR milestones at or beyond total_iterations (", total_iterations, ") are never reached");
}

double schedule_lr(int64_t iteration, double base_lr, const std::vector<int64_t>& milestones) {
  int passed = 0;
  for (auto m : milestones)
    if (iteration >= m) ++passed;
  return base_lr * std::pow(0.5, passed);
}

double schedule_lr(int64_t iteration, const TrainConfig& config) {
  return schedule_lr(iteration, config.base_lr, config.lr_halve_milestones);
}

// -------------------------------------------------------------- LossLog

LossLog::LossLog(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool write_header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw Error("cannot open loss log " + path.string());
  if (write_header) out_ << kHeader << "\n";
}

std::string LossLog::format(const StepRecord& r) {
  std::string line = std::to_string(r.iteration);
  for (double v : {r.dp.l_vgg, r.dp.l_res, r.dp.zeta, r.dp.weighted_res_term, r.dp.l_dp, r.content, r.adversarial,
                   r.total, r.discriminator, r.lr}) {
    line += ',';
    line += format_real(v);
  }
  return line;
}

void LossLog::append(const StepRecord& record) {
  out_ << format(record) << "\n";
  out_.flush();
}

std::vector<StepRecord> LossLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open loss log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw LoadError("loss log has an unexpected header: " + path.string());
  std::vector<StepRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 11) throw LoadError("malformed loss log line: " + line);
    StepRecord r;
    r.iteration = std::stoll(fields[0]);
    r.dp.l_vgg = parse_real(fields[1]);
    r.dp.l_res = parse_real(fields[2]);
    r.dp.zeta = parse_real(fields[3]);
    r.dp.weighted_res_term = parse_real(fields[4]);
    r.dp.l_dp = parse_real(fields[5]);
    r.content = parse_real(fields[6]);
    r.adversarial = parse_real(fields[7]);
    r.total = parse_real(fields[8]);
    r.discriminator = parse_real(fields[9]);
    r.lr = parse_real(fields[10]);
    records.push_back(r);
  }
  return records;
}

Backbones Backbones::load(const TrainConfig& config) {
  return {PretrainedBackbone::load(BackboneKind::vgg19, config.vgg_weights),
          PretrainedBackbone::load(BackboneKind::resnet50, config.resnet_weights)};
}

// -------------------------------------------------------------- Trainer

Trainer::Trainer(TrainConfig config, Backbones backbones)
    : config_(std::move(config)),
      backbones_(std::move(backbones)),
      vgg_extractor_(backbones_.vgg, config_.vgg_tap),
      resnet_extractor_(backbones_.resnet, config_.resnet_tap) {
  config_.validate();
  generator_ = build_generator(config_.generator, mix_seed(config_.seed, 1));
  discriminator_ = build_discriminator(config_.discriminator, mix_seed(config_.seed, 2));
  const auto betas = std::make_tuple(config_.adam_beta1, config_.adam_beta2);
  g_optimizer_ = std::make_unique<torch::optim::Adam>(generator_->parameters(),
                                                      torch::optim::AdamOptions(config_.base_lr).betas(betas));
  d_optimizer_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(),
                                                      torch::optim::AdamOptions(config_.base_lr).betas(betas));
}

StepRecord Trainer::step(const Batch& batch) {
  const auto& weights = config_.loss_weights;
  StepRecord record;
  record.iteration = iteration_;
  record.lr = schedule_lr(iteration_, config_);
  set_lr(*g_optimizer_, record.lr);
  set_lr(*d_optimizer_, record.lr);

  const auto& hr = batch.hr;
  generator_->train();
  if (config_.train_discriminator) discriminator_->train();
  else discriminator_->eval();

  auto fake = forward_generator(generator_, batch.lr);

  // discriminator update
  record.discriminator = std::numeric_limits<double>::quiet_NaN();
  if (config_.train_discriminator) {
    d_optimizer_->zero_grad();
    const auto d_real = forward_discriminator(discriminator_, hr);
    const auto d_fake = forward_discriminator(discriminator_, fake.detach());
    const auto d_loss = adversarial_loss_discriminator(d_real, d_fake);
    record.discriminator = d_loss.item<double>();
    if (!std::isfinite(record.discriminator)) throw DivergenceError("non-finite discriminator loss; " + describe(record));
    d_loss.backward();
    d_optimizer_->step();
  }

  // generator update; the discriminator only passes gradients through
  g_optimizer_->zero_grad();
  set_requires_grad(*discriminator_, false);
  torch::Tensor total;
  try {
    const auto d_real = forward_discriminator(discriminator_, hr).detach();
    const auto d_fake = forward_discriminator(discriminator_, fake);
    const auto adversarial = adversarial_loss_generator(d_real, d_fake);
    const auto content = content_loss(fake, hr);

    const ExtractOptions unchecked{.validate_range = false};
    FeatureMap vgg_hr, res_hr;
    {
      torch::NoGradGuard no_grad;
      vgg_hr = vgg_extractor_.extract(hr);
      res_hr = resnet_extractor_.extract(hr);
    }
    const auto l_vgg = vgg_loss(vgg_extractor_.extract(fake, unchecked), vgg_hr);
    const auto l_res = resnet_loss(resnet_extractor_.extract(fake, unchecked), res_hr);
    const auto dp = dp_loss(l_vgg, l_res, weights, config_.resnet_weighting);

    record.dp = dp.breakdown;
    record.content = content.item<double>();
    record.adversarial = adversarial.item<double>();
    total = total_generator_loss(content, adversarial, dp.value, weights);
    record.total = total.item<double>();
  } catch (const ValidationError& e) {
    set_requires_grad(*discriminator_, true);
    throw DivergenceError(std::string(e.what()) + "; " + describe(record));
  }
  if (!std::isfinite(record.total)) {
    set_requires_grad(*discriminator_, true);
    throw DivergenceError("non-finite generator loss; " + describe(record));
  }
  total.backward();
  g_optimizer_->step();
  set_requires_grad(*discriminator_, true);

  ++iteration_;
  return record;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Archive archive;
  nlohmann::json meta = {{"iteration", iteration_}, {"config", to_json(config_)}};
  archive.put_text("__meta__", meta.dump());
  store_module(archive, *generator_, "generator.");
  store_module(archive, *discriminator_, "discriminator.");
  store_adam(archive, *g_optimizer_, *generator_, "optim.generator.");
  store_adam(archive, *d_optimizer_, *discriminator_, "optim.discriminator.");
  archive.save(path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto archive = Archive::load(path);
  const auto meta_text = archive.text("__meta__");
  if (!meta_text) throw LoadError("checkpoint without metadata: " + path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(*meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint metadata is corrupt: " + std::string(e.what()));
  }
  const auto saved = train_config_from_json(meta.at("config"));
  if (to_json(saved.generator) != to_json(config_.generator))
    throw LoadError("checkpoint generator configuration differs from the trainer's");
  restore_module(archive, *generator_, "generator.", {});
  restore_module(archive, *discriminator_, "discriminator.", {});
  restore_adam(archive, *g_optimizer_, *generator_, "optim.generator.");
  restore_adam(archive, *d_optimizer_, *discriminator_, "optim.discriminator.");
  iteration_ = meta.at("iteration").get<int64_t>();
}

Generator load_generator(const std::filesystem::path& checkpoint) {
  const auto archive = Archive::load(checkpoint);
  const auto meta_text = archive.text("__meta__");
  if (!meta_text) throw LoadError("checkpoint without metadata: " + checkpoint.string());
  const auto meta = nlohmann::json::parse(*meta_text);
  const auto config = generator_config_from_json(meta.at("config").at("generator"));
  Generator generator(config);
  restore_module(archive, *generator, "generator.", {});
  generator->eval();
  return generator;
}

// --------------------------------------------------------- run_training

TrainingResult run_training(Trainer& trainer, const TrainingSet& dataset, const std::filesystem::path& out_dir,
                            const StepCallback& on_step) {
  const auto& config = trainer.config();
  std::filesystem::create_directories(out_dir / "checkpoints");
  save_train_config(out_dir / "config.json", config);

  TrainingResult result;
  result.loss_log = out_dir / "loss_log.csv";
  LossLog log(result.loss_log, /*append=*/trainer.iteration() > 0);
  BatchSampler sampler(dataset, {config.batch_size, config.hr_patch, config.seed});

  while (trainer.iteration() < config.total_iterations) {
    const auto record = trainer.step(sampler.batch_at(trainer.iteration()));
    log.append(record);
    result.records.push_back(record);
    if (on_step) on_step(record);
    if (config.checkpoint_interval > 0 && trainer.iteration() % config.checkpoint_interval == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%08lld.dpsr", static_cast<long long>(trainer.iteration()));
      trainer.save_checkpoint(out_dir / "checkpoints" / name);
    }
  }
  result.final_checkpoint = out_dir / "checkpoints" / "final.dpsr";
  trainer.save_checkpoint(result.final_checkpoint);
  return result;
}

TrainingResult run_training(const TrainConfig& config, const TrainingSet& dataset, const std::filesystem::path& out_dir,
                            const std::optional<std::filesystem::path>& resume, const StepCallback& on_step) {
  Trainer trainer(config, Backbones::load(config));
  if (resume) trainer.load_checkpoint(*resume);
  return run_training(trainer, dataset, out_dir, on_step);
}

}  // namespace dpsr
