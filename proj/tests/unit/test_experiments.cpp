#include <doctest.h>

#include <fstream>

#include "json.hpp"

#include "dpsr/errors.hpp"
#include "dpsr/experiments.hpp"
#include "dpsr/synthetic.hpp"
#include "support.hpp"

using namespace dpsr;

namespace {

ExperimentResources tiny_resources() {
  ExperimentResources r;
  r.backbones = testing::backbones();
  r.train = std::make_shared<const TrainingSet>(TrainingSet::from_images(make_toy_images(4, 64, 5), 4));
  r.eval_sets = {{"mini", make_toy_images(2, 32, 6)}};
  return r;
}

TrainConfig one_step() {
  auto c = testing::short_toy_config(1);
  c.checkpoint_interval = 0;
  return c;
}

}  // namespace

TEST_CASE("sweep specifications") {
  CHECK(SweepSpec::default_values(SweepParameter::mu) ==
        std::vector<std::string>{"0.2", "0.5", "1", "5", "10", "20", "inf"});
  CHECK(SweepSpec::default_values(SweepParameter::beta_tap) ==
        std::vector<std::string>{"beta_1_3", "beta_2_4", "beta_3_6", "beta_4_3"});
  SweepSpec mu{SweepParameter::mu, {"0.5", "inf"}};
  CHECK(mu.apply(TrainConfig::toy(), "inf").loss_weights.vgg_only());
  CHECK(mu.apply(TrainConfig::toy(), "5").loss_weights.mu == 5.0);
  CHECK(mu.label("inf") == "mu=inf (VGG only)");
  CHECK(mu.directory("0.5") == "mu_0.5");
  CHECK_THROWS_AS(mu.apply(TrainConfig::toy(), "abc"), ConfigError);
  CHECK_THROWS_AS(mu.apply(TrainConfig::toy(), "-1"), ConfigError);
  CHECK_THROWS_AS((SweepSpec{SweepParameter::mu, {"1", "1"}}.validate()), ConfigError);
  CHECK_THROWS_AS((SweepSpec{SweepParameter::mu, {}}.validate()), ConfigError);

  SweepSpec beta{SweepParameter::beta_tap, {"beta_2_4"}};
  CHECK(beta.apply(TrainConfig::toy(), "beta_2_4").resnet_tap == FeatureTap::resnet(2, 4));
  CHECK_THROWS_AS(beta.apply(TrainConfig::toy(), "phi_5_4"), ConfigError);
  CHECK_THROWS_AS(beta.apply(TrainConfig::toy(), "beta_4_5"), ConfigError);
}

TEST_CASE("ablation arms") {
  const auto arms = ablation_arms(TrainConfig::toy());
  REQUIRE(arms.size() == 3);
  CHECK(arms[0].config.loss_weights.vgg_only());
  CHECK(arms[1].config.resnet_weighting == ResnetWeighting::unit);
  CHECK_FALSE(arms[1].config.loss_weights.vgg_only());
  CHECK(arms[2].config.resnet_weighting == ResnetWeighting::dynamic);
  CHECK_FALSE(arms[2].config.loss_weights.vgg_only());

  const auto srgan = srgan_variant(GeneratorConfig::full());
  CHECK(srgan.trunk == TrunkKind::residual);
  CHECK(srgan.num_blocks == 16);
  CHECK(srgan.feature_width == 64);
  CHECK(srgan_variant(GeneratorConfig::toy()).num_blocks == 4);
}

TEST_CASE("a sweep records a failed run and carries on") {
  const auto root = testing::scratch_dir("sweep");
  // a vanishing mu blows the weighted ResNet term up to infinity
  const SweepSpec spec{SweepParameter::mu, {"1e-300", "0.5"}};
  const auto result = run_sweep(spec, one_step(), tiny_resources(), root);
  REQUIRE(result.rows.size() == 2);
  CHECK_FALSE(result.rows[0].outcome.ok);
  CHECK(result.rows[0].outcome.error.find("non-finite") != std::string::npos);
  CHECK(result.rows[1].outcome.ok);
  REQUIRE(result.rows[1].outcome.entries.size() == 1);
  CHECK(result.rows[1].outcome.entries[0].dataset == "mini");
  CHECK_FALSE(result.rows[1].outcome.entries[0].lpips.has_value());

  CHECK(std::filesystem::exists(root / "table.csv"));
  CHECK(std::filesystem::exists(root / "mu_0.5" / "eval" / "mini.csv"));
  CHECK(std::filesystem::exists(root / "mu_0.5" / "sr" / "mini" / "toy_000.png"));
  CHECK(std::filesystem::exists(root / "mu_0.5" / "checkpoints" / "final.dpsr"));
  std::ifstream in(root / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  CHECK(manifest.at("runs").size() == 2);
  CHECK(manifest.at("runs")[0].at("status") == "failed");
  std::ifstream run_in(root / "mu_0.5" / "manifest.json");
  const auto run = nlohmann::json::parse(run_in);
  CHECK(run.at("status") == "ok");
  CHECK(run.at("config").at("seed") == 7);

  // rerunning gives the same table
  const auto again = run_sweep(SweepSpec{SweepParameter::mu, {"0.5"}}, one_step(), tiny_resources(),
                               testing::scratch_dir("sweep_again"));
  CHECK((again.rows[0].outcome.entries == result.rows[1].outcome.entries));
}

TEST_CASE("super-resolved output is quantized to 8-bit levels") {
  auto g = build_generator(GeneratorConfig::toy(), 3);
  const auto sr = super_resolve(g, make_toy_images(1, 16, 1)[0].second);
  CHECK(sr.height == 64);
  for (float v : sr.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    CHECK(std::abs(v * 255.0f - std::round(v * 255.0f)) < 1e-3f);
  }
}

TEST_CASE("feature channel dumps") {
  const auto dir = testing::scratch_dir("dump");
  const auto image = make_toy_images(1, 128, 4)[0].second;
  const auto files = dump_feature_channels(image, {FeatureTap::resnet(1, 2), FeatureTap::vgg(3, 3)}, {1, 5},
                                           testing::backbones(), dir);
  REQUIRE(files.size() == 4);
  CHECK(files[0].filename() == "beta_1_2_c1.png");
  CHECK(files[2].filename() == "phi_3_3_c1.png");
  const auto a = read_png(files[0]), b = read_png(files[2]);
  CHECK(a.height == b.height);
  CHECK(a.width == b.width);
  CHECK(a.height == 32);
  CHECK(a.channels == 1);

  CHECK_THROWS_AS(dump_feature_channels(image, {FeatureTap::vgg(3, 3)}, {256}, testing::backbones(), dir),
                  ValidationError);
  CHECK_THROWS_AS(dump_feature_channels(image, {FeatureTap::vgg(3, 3)}, {-1}, testing::backbones(), dir),
                  ValidationError);

  // a flat input gives a flat map away from the zero-padded rim
  const Image flat(3, 128, 128, 0.4f);
  const auto f = dump_feature_channels(flat, {FeatureTap::vgg(3, 3)}, {2}, testing::backbones(), dir / "flat");
  const auto map = read_png(f[0]);
  const float centre = map.at(0, 16, 16);
  for (int64_t y = 8; y < 24; ++y)
    for (int64_t x = 8; x < 24; ++x) CHECK(map.at(0, y, x) == doctest::Approx(centre).epsilon(1e-6));
}

TEST_CASE("channel normalization") {
  const auto flat = normalize_channel(torch::full({4, 5}, 3.0));
  for (float v : flat.data) CHECK(v == 0.0f);
  const auto ramp = normalize_channel(torch::arange(6, torch::kFloat32).view({2, 3}));
  CHECK(ramp.at(0, 0, 0) == 0.0f);
  CHECK(ramp.at(0, 1, 2) == 1.0f);
  CHECK(ramp.at(0, 0, 1) == doctest::Approx(0.2f));
  CHECK_THROWS_AS(normalize_channel(torch::zeros({2, 2, 2})), ShapeError);
}

TEST_CASE("evaluation sets") {
  const auto sets = toy_eval_sets();
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].images.size() == 5);
  CHECK(sets[1].images[0].second.height == 96);
  const auto dir = testing::scratch_dir("evalset");
  write_toy_dataset(dir, 3, 32, 1);
  const auto loaded = load_eval_set("x", dir);
  CHECK(loaded.images.size() == 3);
  CHECK(loaded.images[0].first == "toy_000");
  CHECK_THROWS_AS(load_eval_set("y", dir / "none"), LoadError);
}
