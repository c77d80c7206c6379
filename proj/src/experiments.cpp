#include "dpsr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "dpsr/config_io.hpp"
#include "dpsr/errors.hpp"
#include "dpsr/log.hpp"
#include "dpsr/synthetic.hpp"

namespace dpsr {
namespace {

using nlohmann::json;

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json entries_to_json(const std::vector<TableEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries)
    out.push_back({{"dataset", e.dataset},
                   {"psnr_db", format_real(e.psnr_db)},
                   {"ssim", format_real(e.ssim)},
                   {"lpips", e.lpips ? json(format_real(*e.lpips)) : json(nullptr)}});
  return out;
}

json row_to_json(const SweepRow& row) {
  return {{"value", row.value},
          {"label", row.outcome.label},
          {"run_dir", row.outcome.run_dir.string()},
          {"vgg_only_baseline", row.vgg_only_baseline},
          {"status", row.outcome.ok ? "ok" : "failed"},
          {"error", row.outcome.error}};
}

// Runs every arm, then emits the combined table and a manifest.
SweepResult run_arms(const std::vector<AblationArm>& arms, const ExperimentResources& resources,
                     const std::filesystem::path& root, json manifest) {
  SweepResult result;
  std::vector<TableEntry> entries;
  for (const auto& arm : arms) {
    log::info("run '", arm.label, "' -> ", (root / arm.name).string());
    SweepRow row{arm.name, arm.config.loss_weights.vgg_only(), run_experiment(arm.config, arm.label, resources, root / arm.name)};
    if (!row.outcome.ok) log::error("run '", arm.label, "' failed: ", row.outcome.error);
    entries.insert(entries.end(), row.outcome.entries.begin(), row.outcome.entries.end());
    result.rows.push_back(std::move(row));
  }
  if (!entries.empty()) result.tables = emit_comparison_table(entries, root / "table");
  manifest["runs"] = json::array();
  for (const auto& row : result.rows) manifest["runs"].push_back(row_to_json(row));
  write_json(root / "manifest.json", manifest);
  return result;
}

std::string tap_file_name(const FeatureTap& tap) {
  auto name = tap.name();
  std::replace(name.begin(), name.end(), ':', '-');
  return name;
}

}  // namespace

EvalSet load_eval_set(const std::string& name, const std::filesystem::path& hr_dir) {
  EvalSet set{name, {}};
  for (const auto& path : list_pngs(hr_dir)) set.images.emplace_back(path.stem().string(), read_png(path));
  if (set.images.empty()) throw ValidationError("evaluation set '" + name + "' has no PNG files in " + hr_dir.string());
  return set;
}

std::vector<EvalSet> toy_eval_sets(uint64_t seed) {
  return {{"toy5", make_toy_images(5, 64, mix_seed(seed, 0))}, {"toy_urban", make_toy_images(4, 96, mix_seed(seed, 1))}};
}

Image super_resolve(Generator& generator, const Image& lr) {
  torch::NoGradGuard no_grad;
  generator->eval();
  auto sr = forward_generator(generator, to_tensor(lr).unsqueeze(0)).clamp(0.0, 1.0);
  sr = (sr * 255.0).round() / 255.0;
  return from_tensor(sr);
}

RunOutcome run_experiment(const TrainConfig& config, const std::string& label, const ExperimentResources& resources,
                          const std::filesystem::path& run_dir) {
  RunOutcome outcome;
  outcome.label = label;
  outcome.run_dir = run_dir;
  json manifest = {{"label", label}, {"seed", config.seed}, {"config", to_json(config)}, {"status", "running"}};
  std::filesystem::create_directories(run_dir);
  write_json(run_dir / "manifest.json", manifest);

  try {
    if (!resources.train || resources.train->size() == 0) throw ValidationError("training set is empty");
    Trainer trainer(config, resources.backbones);
    const auto trained = run_training(trainer, *resources.train, run_dir);
    outcome.loss_log = trained.loss_log;

    EvalOptions options;
    options.scale = config.scale();
    options.lpips = resources.lpips;
    json reports = json::object();
    for (const auto& set : resources.eval_sets) {
      std::vector<EvalPair> pairs;
      for (const auto& [id, image] : set.images) {
        auto hr = modcrop(image, config.scale());
        auto sr = super_resolve(trainer.generator(), degrade_bicubic(hr, config.scale()));
        write_png(run_dir / "sr" / set.name / (id + ".png"), sr);
        pairs.push_back({id, std::move(sr), std::move(hr)});
      }
      const auto report = evaluate_pairs(pairs, options);
      const auto csv = run_dir / "eval" / (set.name + ".csv");
      report.write_csv(csv);
      reports[set.name] = csv.string();
      outcome.entries.push_back(TableEntry::from_report(label, set.name, report));
    }
    outcome.ok = true;
    manifest["status"] = "ok";
    manifest["reports"] = reports;
    manifest["metrics"] = entries_to_json(outcome.entries);
    manifest["loss_log"] = outcome.loss_log.string();
    manifest["final_checkpoint"] = trained.final_checkpoint.string();
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
    outcome.entries.clear();
    manifest["status"] = "failed";
    manifest["error"] = outcome.error;
  }
  write_json(run_dir / "manifest.json", manifest);
  return outcome;
}

// ----------------------------------------------------------------- sweep

std::vector<std::string> SweepSpec::default_values(SweepParameter parameter) {
  if (parameter == SweepParameter::mu) return {"0.2", "0.5", "1", "5", "10", "20", "inf"};
  return {"beta_1_3", "beta_2_4", "beta_3_6", "beta_4_3"};
}

TrainConfig SweepSpec::apply(const TrainConfig& base, const std::string& value) const {
  TrainConfig config = base;
  if (parameter == SweepParameter::mu) {
    double mu = 0.0;
    try {
      mu = parse_real(value);
    } catch (const ValidationError&) {
      throw ConfigError("sweep: mu value '" + value + "' is not a number");
    }
    config.loss_weights.mu = mu;
  } else {
    FeatureTap tap;
    try {
      tap = FeatureTap::parse(value);
      tap.validate();
    } catch (const Error& e) {
      throw ConfigError("sweep: '" + value + "' is not a ResNet tap: " + e.what());
    }
    if (tap.backbone != BackboneKind::resnet50) throw ConfigError("sweep: '" + value + "' is not a ResNet tap");
    config.resnet_tap = tap;
  }
  config.validate();
  return config;
}

std::string SweepSpec::label(const std::string& value) const {
  if (parameter == SweepParameter::beta_tap) return value;
  const double mu = parse_real(value);
  return mu == kInfiniteMu ? "mu=inf (VGG only)" : "mu=" + value;
}

std::string SweepSpec::directory(const std::string& value) const {
  if (parameter == SweepParameter::beta_tap) return FeatureTap::parse(value).name();
  return "mu_" + value;
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<std::string> dirs;
  for (const auto& v : values) {
    apply(TrainConfig::toy(), v);
    const auto d = directory(v);
    if (std::find(dirs.begin(), dirs.end(), d) != dirs.end()) throw ConfigError("sweep: duplicate value '" + v + "'");
    dirs.push_back(d);
  }
}

SweepResult run_sweep(const SweepSpec& spec, const TrainConfig& base, const ExperimentResources& resources,
                      const std::filesystem::path& root) {
  spec.validate();
  std::vector<AblationArm> arms;
  for (const auto& value : spec.values) arms.push_back({spec.directory(value), spec.label(value), spec.apply(base, value)});
  json manifest = {{"experiment", "sweep"},
                   {"parameter", spec.parameter == SweepParameter::mu ? "mu" : "beta_tap"},
                   {"values", spec.values},
                   {"base_config", to_json(base)}};
  auto result = run_arms(arms, resources, root, manifest);
  for (std::size_t i = 0; i < result.rows.size(); ++i) result.rows[i].value = spec.values[i];
  return result;
}

std::vector<AblationArm> ablation_arms(const TrainConfig& base) {
  auto vgg_only = base;
  vgg_only.loss_weights.mu = kInfiniteMu;
  auto fixed = base;
  fixed.resnet_weighting = ResnetWeighting::unit;
  auto dynamic = base;
  dynamic.resnet_weighting = ResnetWeighting::dynamic;
  if (base.loss_weights.vgg_only()) {
    fixed.loss_weights.mu = LossWeights{}.mu;
    dynamic.loss_weights.mu = LossWeights{}.mu;
  }
  return {{"vgg_only", "VGG only", vgg_only},
          {"static", "VGG+ResNet static", fixed},
          {"dynamic", "VGG+ResNet+dynamic", dynamic}};
}

SweepResult run_ablation(const TrainConfig& base, const ExperimentResources& resources,
                         const std::filesystem::path& root) {
  json manifest = {{"experiment", "ablation"}, {"base_config", to_json(base)}};
  return run_arms(ablation_arms(base), resources, root, manifest);
}

GeneratorConfig srgan_variant(const GeneratorConfig& esrgan) {
  auto g = esrgan;
  g.trunk = TrunkKind::residual;
  if (esrgan.num_blocks == GeneratorConfig::full().num_blocks) g.num_blocks = 16;
  return g;
}

CorrelationResult run_correlation(const TrainConfig& base, const ExperimentResources& resources,
                                  const std::filesystem::path& root) {
  struct LossSetting {
    const char* name;
    double mu;
    FeatureTap tap;
  };
  const std::vector<LossSetting> settings = {{"mu_inf", kInfiniteMu, FeatureTap::resnet(3, 6)},
                                             {"mu_1_beta_1_3", 1.0, FeatureTap::resnet(1, 3)},
                                             {"mu_10_beta_1_3", 10.0, FeatureTap::resnet(1, 3)},
                                             {"mu_0.5_beta_3_6", 0.5, FeatureTap::resnet(3, 6)}};
  auto arms_for = [&](const GeneratorConfig& generator) {
    std::vector<AblationArm> arms;
    for (const auto& s : settings) {
      auto config = base;
      config.generator = generator;
      config.loss_weights.mu = s.mu;
      config.resnet_tap = s.tap;
      arms.push_back({s.name, s.name, config});
    }
    return arms;
  };

  CorrelationResult result;
  const auto srgan_generator = srgan_variant(base.generator);
  auto esrgan_generator = base.generator;
  esrgan_generator.trunk = TrunkKind::rrdb;
  result.srgan = run_arms(arms_for(srgan_generator), resources, root / "srgan",
                          {{"experiment", "correlation"}, {"preset", "srgan"}, {"generator", to_json(srgan_generator)}});
  result.esrgan = run_arms(arms_for(esrgan_generator), resources, root / "esrgan",
                           {{"experiment", "correlation"}, {"preset", "esrgan"}, {"generator", to_json(esrgan_generator)}});

  // ranking of the four settings per (dataset, metric) for each preset
  auto order = [&](const SweepResult& r, const std::string& dataset, Metric metric) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& row : r.rows)
      for (const auto& e : row.outcome.entries) {
        if (e.dataset != dataset) continue;
        std::optional<double> v = metric == Metric::psnr ? std::optional<double>(e.psnr_db)
                                  : metric == Metric::ssim ? std::optional<double>(e.ssim)
                                                           : e.lpips;
        if (v) scored.emplace_back(higher_is_better(metric) ? -*v : *v, e.method);
      }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string joined;
    for (const auto& [_, name] : scored) joined += (joined.empty() ? "" : ";") + name;
    return joined;
  };

  result.rank_order = root / "rank_order.csv";
  std::ofstream out(result.rank_order);
  if (!out) throw Error("cannot write " + result.rank_order.string());
  out << "dataset,metric,srgan_order,esrgan_order,same_order\n";
  for (const auto& set : resources.eval_sets) {
    for (auto [metric, name] : {std::pair{Metric::psnr, "psnr_db"}, {Metric::ssim, "ssim"}, {Metric::lpips, "lpips"}}) {
      const auto a = order(result.srgan, set.name, metric), b = order(result.esrgan, set.name, metric);
      out << set.name << ',' << name << ',' << a << ',' << b << ',' << (a == b ? "true" : "false") << '\n';
    }
  }
  return result;
}

// ------------------------------------------------------------ features

Image normalize_channel(const torch::Tensor& map) {
  const auto m = map.to(torch::kFloat64).contiguous();
  if (m.dim() != 2) throw ShapeError("normalize_channel expects an (H,W) map");
  const double lo = m.min().item<double>(), hi = m.max().item<double>();
  Image out(1, m.size(0), m.size(1));
  const double range = hi - lo;
  if (!(range > 1e-12 * std::max(1.0, std::abs(hi)))) return out;
  const auto* p = m.data_ptr<double>();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>((p[i] - lo) / range);
  return out;
}

std::vector<std::filesystem::path> dump_feature_channels(const Image& image, const std::vector<FeatureTap>& taps,
                                                         const std::vector<int64_t>& channels,
                                                         const Backbones& backbones,
                                                         const std::filesystem::path& out_dir) {
  if (image.channels != 3) throw ShapeError("dump_feature_channels expects an RGB image");
  if (taps.empty() || channels.empty()) throw ValidationError("dump_feature_channels needs taps and channels");
  const auto input = to_tensor(image).unsqueeze(0);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  torch::NoGradGuard no_grad;
  for (const auto& tap : taps) {
    tap.validate();
    const auto& backbone = tap.backbone == BackboneKind::vgg19 ? backbones.vgg : backbones.resnet;
    if (!backbone) throw LoadError("no " + to_string(tap.backbone) + " weights loaded");
    const auto features = FeatureExtractor(backbone, tap).extract(input);
    const auto c_count = features.data.size(1);
    for (auto c : channels) {
      if (c < 0 || c >= c_count)
        throw ValidationError("channel " + std::to_string(c) + " is out of range for " + tap.name() + " (" +
                              std::to_string(c_count) + " channels)");
      const auto path = out_dir / (tap_file_name(tap) + "_c" + std::to_string(c) + ".png");
      write_png(path, normalize_channel(features.data[0][c]));
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace dpsr
