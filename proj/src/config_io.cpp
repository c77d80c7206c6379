#include "dpsr/config_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "dpsr/errors.hpp"

namespace dpsr {

using nlohmann::json;

namespace {

json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double real_from_json(const json& j, const char* key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_real(j.get<std::string>());
  throw ConfigError(std::string("config: '") + key + "' must be a number");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
}

const char* weighting_name(ResnetWeighting w) { return w == ResnetWeighting::dynamic ? "dynamic" : "unit"; }

ResnetWeighting weighting_from_name(const std::string& s) {
  if (s == "dynamic") return ResnetWeighting::dynamic;
  if (s == "unit") return ResnetWeighting::unit;
  throw ConfigError("config: resnet_weighting must be 'dynamic' or 'unit'");
}

json discriminator_to_json(const DiscriminatorConfig& d) {
  return {{"input_size", d.input_size}, {"base_width", d.base_width}};
}

DiscriminatorConfig discriminator_from_json(const json& j, DiscriminatorConfig d) {
  reject_unknown(j, {"input_size", "base_width"}, "discriminator");
  if (j.contains("input_size")) d.input_size = j["input_size"].get<int64_t>();
  if (j.contains("base_width")) d.base_width = j["base_width"].get<int64_t>();
  return d;
}

GeneratorConfig generator_from_json(const json& j, GeneratorConfig g) {
  reject_unknown(j, {"num_blocks", "feature_width", "growth_channels", "residual_scaling", "scale_factor", "trunk"},
                 "generator");
  if (j.contains("num_blocks")) g.num_blocks = j["num_blocks"].get<int64_t>();
  if (j.contains("feature_width")) g.feature_width = j["feature_width"].get<int64_t>();
  if (j.contains("growth_channels")) g.growth_channels = j["growth_channels"].get<int64_t>();
  if (j.contains("residual_scaling")) g.residual_scaling = real_from_json(j["residual_scaling"], "residual_scaling");
  if (j.contains("scale_factor")) g.scale_factor = j["scale_factor"].get<int64_t>();
  if (j.contains("trunk")) {
    const auto t = j["trunk"].get<std::string>();
    if (t == "rrdb") g.trunk = TrunkKind::rrdb;
    else if (t == "residual") g.trunk = TrunkKind::residual;
    else throw ConfigError("config: generator.trunk must be 'rrdb' or 'residual'");
  }
  return g;
}

LossWeights weights_from_json(const json& j, LossWeights w) {
  reject_unknown(j, {"lambda_content", "eta_adversarial", "gamma_dp", "mu", "c"}, "loss_weights");
  if (j.contains("lambda_content")) w.lambda_content = real_from_json(j["lambda_content"], "lambda_content");
  if (j.contains("eta_adversarial")) w.eta_adversarial = real_from_json(j["eta_adversarial"], "eta_adversarial");
  if (j.contains("gamma_dp")) w.gamma_dp = real_from_json(j["gamma_dp"], "gamma_dp");
  if (j.contains("mu")) w.mu = real_from_json(j["mu"], "mu");
  if (j.contains("c")) w.c = real_from_json(j["c"], "c");
  return w;
}

}  // namespace

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_real(const std::string& text) {
  if (text == "inf" || text == "+inf" || text == "INFINITY" || text == "infinity")
    return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (text == "nan" || text.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("not a number: '" + text + "'");
  }
  if (used != text.size()) throw ValidationError("not a number: '" + text + "'");
  return v;
}

json to_json(const GeneratorConfig& g) {
  return {{"num_blocks", g.num_blocks},
          {"feature_width", g.feature_width},
          {"growth_channels", g.growth_channels},
          {"residual_scaling", g.residual_scaling},
          {"scale_factor", g.scale_factor},
          {"trunk", g.trunk == TrunkKind::rrdb ? "rrdb" : "residual"}};
}

GeneratorConfig generator_config_from_json(const json& j) { return generator_from_json(j, GeneratorConfig::full()); }

json to_json(const TrainConfig& c) {
  const auto& w = c.loss_weights;
  return {{"total_iterations", c.total_iterations},
          {"base_lr", c.base_lr},
          {"lr_halve_milestones", c.lr_halve_milestones},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"batch_size", c.batch_size},
          {"hr_patch", c.hr_patch},
          {"loss_weights",
           {{"lambda_content", w.lambda_content},
            {"eta_adversarial", w.eta_adversarial},
            {"gamma_dp", w.gamma_dp},
            {"mu", real_to_json(w.mu)},
            {"c", w.c}}},
          {"resnet_weighting", weighting_name(c.resnet_weighting)},
          {"vgg_tap", c.vgg_tap.name()},
          {"resnet_tap", c.resnet_tap.name()},
          {"seed", c.seed},
          {"generator", to_json(c.generator)},
          {"discriminator", discriminator_to_json(c.discriminator)},
          {"train_discriminator", c.train_discriminator},
          {"checkpoint_interval", c.checkpoint_interval},
          {"vgg_weights", c.vgg_weights},
          {"resnet_weights", c.resnet_weights},
          {"train_dir", c.train_dir}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  reject_unknown(j,
                 {"preset", "total_iterations", "base_lr", "lr_halve_milestones", "adam_beta1", "adam_beta2",
                  "batch_size", "hr_patch", "loss_weights", "resnet_weighting", "vgg_tap", "resnet_tap", "seed",
                  "generator", "discriminator", "train_discriminator", "checkpoint_interval", "vgg_weights",
                  "resnet_weights", "train_dir"},
                 "config");
  TrainConfig c;
  const auto preset = j.value("preset", std::string("full"));
  if (preset == "toy") c = TrainConfig::toy();
  else if (preset == "full") c = TrainConfig::full_scale();
  else throw ConfigError("config: preset must be 'full' or 'toy'");

  try {
    if (j.contains("total_iterations")) c.total_iterations = j["total_iterations"].get<int64_t>();
    if (j.contains("base_lr")) c.base_lr = real_from_json(j["base_lr"], "base_lr");
    if (j.contains("lr_halve_milestones")) c.lr_halve_milestones = j["lr_halve_milestones"].get<std::vector<int64_t>>();
    if (j.contains("adam_beta1")) c.adam_beta1 = real_from_json(j["adam_beta1"], "adam_beta1");
    if (j.contains("adam_beta2")) c.adam_beta2 = real_from_json(j["adam_beta2"], "adam_beta2");
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int64_t>();
    if (j.contains("hr_patch")) c.hr_patch = j["hr_patch"].get<int64_t>();
    if (j.contains("loss_weights")) c.loss_weights = weights_from_json(j["loss_weights"], c.loss_weights);
    if (j.contains("resnet_weighting")) c.resnet_weighting = weighting_from_name(j["resnet_weighting"].get<std::string>());
    if (j.contains("vgg_tap")) c.vgg_tap = FeatureTap::parse(j["vgg_tap"].get<std::string>());
    if (j.contains("resnet_tap")) c.resnet_tap = FeatureTap::parse(j["resnet_tap"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("generator")) c.generator = generator_from_json(j["generator"], c.generator);
    if (j.contains("discriminator")) c.discriminator = discriminator_from_json(j["discriminator"], c.discriminator);
    if (j.contains("train_discriminator")) c.train_discriminator = j["train_discriminator"].get<bool>();
    if (j.contains("checkpoint_interval")) c.checkpoint_interval = j["checkpoint_interval"].get<int64_t>();
    if (j.contains("vgg_weights")) c.vgg_weights = j["vgg_weights"].get<std::string>();
    if (j.contains("resnet_weights")) c.resnet_weights = j["resnet_weights"].get<std::string>();
    if (j.contains("train_dir")) c.train_dir = j["train_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  auto config = train_config_from_json(j);
  // relative paths inside the file are resolved against its directory
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (path.parent_path() / p).lexically_normal().string();
  };
  if (j.contains("vgg_weights")) resolve(config.vgg_weights);
  if (j.contains("resnet_weights")) resolve(config.resnet_weights);
  if (j.contains("train_dir")) resolve(config.train_dir);
  return config;
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(config).dump(2) << "\n";
}

}  // namespace dpsr
