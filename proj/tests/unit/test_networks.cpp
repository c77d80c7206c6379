#include <doctest.h>

#include "dpsr/errors.hpp"
#include "dpsr/networks.hpp"

using namespace dpsr;

namespace {

int64_t conv3(int64_t in, int64_t out) { return 9 * in * out + out; }

// Parameter count summed layer by layer from the block definitions.
int64_t generator_params_oracle(const GeneratorConfig& c) {
  const int64_t nf = c.feature_width, gc = c.growth_channels;
  int64_t block = 0;
  if (c.trunk == TrunkKind::rrdb) {
    int64_t rdb = 0;
    for (int64_t k = 0; k < 4; ++k) rdb += conv3(nf + k * gc, gc);
    rdb += conv3(nf + 4 * gc, nf);
    block = 3 * rdb;
  } else {
    block = 2 * conv3(nf, nf);
  }
  const auto ups = static_cast<int64_t>(c.upsample_factors().size());
  return conv3(3, nf) + c.num_blocks * block + conv3(nf, nf) + ups * conv3(nf, nf) + conv3(nf, nf) + conv3(nf, 3);
}

}  // namespace

TEST_CASE("generator parameter counts") {
  CHECK(parameter_count(*build_generator(GeneratorConfig::toy(), 0)) ==
        generator_params_oracle(GeneratorConfig::toy()));
  CHECK(parameter_count(*build_generator(GeneratorConfig::srgan_toy(), 0)) ==
        generator_params_oracle(GeneratorConfig::srgan_toy()));
  // the widely reported size of the 23-block RRDB generator
  CHECK(generator_params_oracle(GeneratorConfig::full()) == 16697987);
  CHECK(parameter_count(*Generator(GeneratorConfig::full())) == 16697987);
}

TEST_CASE("generator output shapes per scale") {
  for (int64_t s : {2, 3, 4}) {
    auto cfg = GeneratorConfig::toy();
    cfg.num_blocks = 1;
    cfg.scale_factor = s;
    auto g = build_generator(cfg, 1);
    torch::NoGradGuard no_grad;
    const auto y = forward_generator(g, torch::rand({2, 3, 7, 9}));
    CHECK(y.sizes() == torch::IntArrayRef({2, 3, 7 * s, 9 * s}));
  }
  auto g = build_generator(GeneratorConfig::toy(), 1);
  CHECK_THROWS_AS(forward_generator(g, torch::rand({1, 1, 8, 8})), ShapeError);
  CHECK_THROWS_AS(forward_generator(g, torch::rand({3, 8, 8})), ShapeError);
  CHECK(GeneratorConfig::full().upsample_factors() == std::vector<int64_t>{2, 2});
  CHECK(GeneratorConfig{1, 8, 4, 0.2, 3}.upsample_factors() == std::vector<int64_t>{3});
}

TEST_CASE("normalization layers") {
  CHECK(normalization_layers(*build_generator(GeneratorConfig::toy(), 0)).empty());
  CHECK(normalization_layers(*build_generator(GeneratorConfig::srgan_toy(), 0)).empty());
  CHECK_FALSE(normalization_layers(*build_discriminator({32, 16}, 0)).empty());
}

TEST_CASE("discriminator scores") {
  auto d = build_discriminator({32, 16}, 3);
  const auto s = forward_discriminator(d, torch::rand({5, 3, 32, 32}));
  CHECK(s.sizes() == torch::IntArrayRef({5}));
  CHECK_THROWS_AS(forward_discriminator(d, torch::rand({5, 3, 64, 64})), ShapeError);
  CHECK_THROWS_AS(forward_discriminator(d, torch::rand({5, 1, 32, 32})), ShapeError);
  auto full = build_discriminator(DiscriminatorConfig::full(), 3);
  torch::NoGradGuard no_grad;
  full->eval();
  CHECK(forward_discriminator(full, torch::rand({2, 3, 128, 128})).sizes() == torch::IntArrayRef({2}));
}

TEST_CASE("seeded builds are reproducible") {
  auto a = build_generator(GeneratorConfig::toy(), 42);
  auto b = build_generator(GeneratorConfig::toy(), 42);
  auto c = build_generator(GeneratorConfig::toy(), 43);
  const auto pa = a->parameters(), pb = b->parameters(), pc = c->parameters();
  bool all_equal = true, any_differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && torch::equal(pa[i], pb[i]);
    any_differs = any_differs || !torch::equal(pa[i], pc[i]);
  }
  CHECK(all_equal);
  CHECK(any_differs);
  auto da = build_discriminator({32, 16}, 5), db = build_discriminator({32, 16}, 5);
  for (std::size_t i = 0; i < da->parameters().size(); ++i)
    CHECK(torch::equal(da->parameters()[i], db->parameters()[i]));
}

TEST_CASE("configuration checks") {
  auto cfg = GeneratorConfig::toy();
  cfg.scale_factor = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(Generator{cfg}, ConfigError);
  cfg = GeneratorConfig::toy();
  cfg.num_blocks = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GeneratorConfig::toy();
  cfg.residual_scaling = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(DiscriminatorConfig({48, 16}).validate(), ConfigError);
  CHECK_THROWS_AS(DiscriminatorConfig({32, 0}).validate(), ConfigError);
}

TEST_CASE("residual trunk preset") {
  auto g = build_generator(GeneratorConfig::srgan_toy(), 0);
  CHECK(g->config.trunk == TrunkKind::residual);
  CHECK(g->trunk->size() == 4);
  CHECK(g->trunk[0]->as<ResidualBlockImpl>() != nullptr);
  auto e = build_generator(GeneratorConfig::toy(), 0);
  CHECK(e->trunk[0]->as<RRDBImpl>() != nullptr);
}
