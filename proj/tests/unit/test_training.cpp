#include <doctest.h>

#include <cmath>
#include <fstream>

#include "dpsr/config_io.hpp"
#include "dpsr/errors.hpp"
#include "dpsr/synthetic.hpp"
#include "dpsr/training.hpp"
#include "support.hpp"

using namespace dpsr;

namespace {

const TrainingSet& toy_set() {
  static const auto set = TrainingSet::from_images(make_toy_images(6, 64, 2), 4);
  return set;
}

bool same_parameters(torch::nn::Module& a, torch::nn::Module& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  for (const auto& item : pa)
    if (!torch::equal(item.value(), pb[item.key()])) return false;
  return true;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const std::vector<int64_t> m = {50000, 100000, 200000, 300000};
  CHECK(schedule_lr(0, 1e-4, m) == 1e-4);
  CHECK(schedule_lr(49999, 1e-4, m) == 1e-4);
  CHECK(schedule_lr(50000, 1e-4, m) == 5e-5);
  CHECK(schedule_lr(150000, 1e-4, m) == 2.5e-5);
  CHECK(schedule_lr(350000, 1e-4, m) == 1e-4 / 16);
  CHECK(schedule_lr(400000, 1e-4, m) == 1e-4 / 16);
  CHECK(schedule_lr(123, 0.3, {}) == 0.3);
  CHECK(schedule_lr(100000, TrainConfig::full_scale()) == 2.5e-5);
}

TEST_CASE("presets and validation") {
  const auto full = TrainConfig::full_scale();
  CHECK(full.total_iterations == 400000);
  CHECK(full.batch_size == 16);
  CHECK(full.hr_patch == 128);
  CHECK(full.adam_beta2 == 0.99);
  CHECK(full.vgg_tap == FeatureTap::vgg(5, 4));
  CHECK(full.resnet_tap == FeatureTap::resnet(3, 6));
  CHECK_NOTHROW(full.validate());
  const auto toy = TrainConfig::toy();
  CHECK(toy.total_iterations == 500);
  CHECK(toy.generator.num_blocks == 4);
  CHECK_NOTHROW(toy.validate());

  auto bad = toy;
  bad.hr_patch = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy;
  bad.hr_patch = 64;  // discriminator expects 32
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy;
  bad.lr_halve_milestones = {10, 5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy;
  bad.vgg_tap = FeatureTap::resnet(1, 1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy;
  bad.loss_weights.mu = -2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy;
  bad.adam_beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config JSON round trip") {
  auto config = TrainConfig::toy();
  config.loss_weights.mu = kInfiniteMu;
  config.resnet_tap = FeatureTap::resnet(1, 3);
  config.resnet_weighting = ResnetWeighting::unit;
  config.seed = 99;
  config.lr_halve_milestones = {10, 20};
  const auto j = to_json(config);
  CHECK(j.at("loss_weights").at("mu") == "inf");
  const auto back = train_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.loss_weights.vgg_only());
  CHECK(back.resnet_tap == FeatureTap::resnet(1, 3));

  const auto partial = train_config_from_json(nlohmann::json{{"preset", "toy"}, {"total_iterations", 3}});
  CHECK(partial.total_iterations == 3);
  CHECK(partial.generator.num_blocks == 4);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"learning_rate", 1}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"loss_weights", {{"nu", 1}}}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"preset", "huge"}}), ConfigError);

  CHECK(parse_real(format_real(0.1)) == 0.1);
  CHECK(std::isinf(parse_real("inf")));
  CHECK(std::isnan(parse_real(format_real(std::nan("")))));
  CHECK_THROWS_AS(parse_real("1.5x"), ValidationError);
}

TEST_CASE("loss log round trip") {
  const auto dir = testing::scratch_dir("losslog");
  StepRecord r;
  r.iteration = 3;
  r.dp = {0.1, 1.0 / 3.0, 0.3000000000000001, 0.2, 0.30000000000000004};
  r.content = 1e-300;
  r.adversarial = 0.6931471805599453;
  r.total = 2.5;
  r.discriminator = std::nan("");
  r.lr = 1e-4;
  {
    LossLog log(dir / "log.csv", false);
    log.append(r);
  }
  {
    LossLog log(dir / "log.csv", true);
    r.iteration = 4;
    r.discriminator = 0.25;
    log.append(r);
  }
  const auto back = LossLog::read(dir / "log.csv");
  REQUIRE(back.size() == 2);
  CHECK((back[1] == r));
  CHECK(std::isnan(back[0].discriminator));
  CHECK((back[0].dp == r.dp));
  std::ifstream in(dir / "log.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == LossLog::kHeader);
}

TEST_CASE("a step updates both networks and logs consistent numbers") {
  Trainer trainer(testing::short_toy_config(2), testing::backbones());
  auto g0 = build_generator(trainer.config().generator, mix_seed(trainer.config().seed, 1));
  auto d0 = build_discriminator(trainer.config().discriminator, mix_seed(trainer.config().seed, 2));
  CHECK(same_parameters(*trainer.generator(), *g0));
  BatchSampler sampler(toy_set(), {4, 32, 7});
  const auto r = trainer.step(sampler.batch_at(0));
  CHECK(trainer.iteration() == 1);
  CHECK_FALSE(same_parameters(*trainer.generator(), *g0));
  CHECK_FALSE(same_parameters(*trainer.discriminator(), *d0));
  CHECK(r.total == doctest::Approx(1e-2 * r.content + 5e-3 * r.adversarial + r.dp.l_dp).epsilon(1e-6));
  CHECK(r.dp.weighted_res_term == doctest::Approx(r.dp.l_vgg / 0.5).epsilon(1e-5));
  CHECK(std::isfinite(r.discriminator));
  CHECK(r.lr == 1e-4);
}

TEST_CASE("frozen discriminator and zero adversarial weight") {
  auto config = testing::short_toy_config(2);
  config.train_discriminator = false;
  config.loss_weights.eta_adversarial = 0.0;
  Trainer trainer(config, testing::backbones());
  auto d0 = build_discriminator(config.discriminator, mix_seed(config.seed, 2));
  BatchSampler sampler(toy_set(), {4, 32, 7});
  const auto r = trainer.step(sampler.batch_at(0));
  CHECK(std::isnan(r.discriminator));
  CHECK(same_parameters(*trainer.discriminator(), *d0));
  CHECK(r.total == doctest::Approx(1e-2 * r.content + r.dp.l_dp).epsilon(1e-6));
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run") {
  const auto dir = testing::scratch_dir("resume");
  auto config = testing::short_toy_config(4);
  config.checkpoint_interval = 2;
  Trainer straight(config, testing::backbones());
  const auto full = run_training(straight, toy_set(), dir / "straight");
  CHECK(std::filesystem::exists(dir / "straight" / "checkpoints" / "iter_00000002.dpsr"));
  CHECK(std::filesystem::exists(full.final_checkpoint));

  Trainer resumed(config, testing::backbones());
  resumed.load_checkpoint(dir / "straight" / "checkpoints" / "iter_00000002.dpsr");
  CHECK(resumed.iteration() == 2);
  const auto tail = run_training(resumed, toy_set(), dir / "resumed");
  REQUIRE(tail.records.size() == 2);
  CHECK((tail.records[0] == full.records[2]));
  CHECK((tail.records[1] == full.records[3]));
  CHECK(same_parameters(*resumed.generator(), *straight.generator()));
  CHECK((LossLog::read(full.loss_log) == full.records));

  // save, load, save gives the same archive contents
  Trainer copy(config, testing::backbones());
  copy.load_checkpoint(full.final_checkpoint);
  copy.save_checkpoint(dir / "again.dpsr");
  const auto a = Archive::load(full.final_checkpoint), b = Archive::load(dir / "again.dpsr");
  CHECK((a.names() == b.names()));
  for (const auto& n : a.names()) CHECK(torch::equal(a.tensor(n), b.tensor(n)));

  auto g = load_generator(full.final_checkpoint);
  CHECK(same_parameters(*g, *straight.generator()));
}

TEST_CASE("bad checkpoints are rejected") {
  const auto dir = testing::scratch_dir("badckpt");
  {
    std::ofstream out(dir / "junk.dpsr", std::ios::binary);
    out << "not an archive at all";
  }
  Trainer trainer(testing::short_toy_config(1), testing::backbones());
  CHECK_THROWS_AS(trainer.load_checkpoint(dir / "junk.dpsr"), LoadError);
  CHECK_THROWS_AS(trainer.load_checkpoint(dir / "missing.dpsr"), LoadError);

  trainer.save_checkpoint(dir / "ok.dpsr");
  // truncate the file
  const auto size = std::filesystem::file_size(dir / "ok.dpsr");
  std::filesystem::resize_file(dir / "ok.dpsr", size / 2);
  CHECK_THROWS_AS(trainer.load_checkpoint(dir / "ok.dpsr"), LoadError);

  auto other = testing::short_toy_config(1);
  other.generator.num_blocks = 2;
  Trainer small(other, testing::backbones());
  small.save_checkpoint(dir / "small.dpsr");
  CHECK_THROWS_AS(trainer.load_checkpoint(dir / "small.dpsr"), LoadError);
}
