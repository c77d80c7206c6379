// Command-line driver: training, evaluation and the experiment runners.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dpsr/config_io.hpp"
#include "dpsr/data_pipeline.hpp"
#include "dpsr/errors.hpp"
#include "dpsr/experiments.hpp"
#include "dpsr/log.hpp"
#include "dpsr/lpips.hpp"
#include "dpsr/metrics.hpp"
#include "dpsr/report.hpp"
#include "dpsr/synthetic.hpp"
#include "dpsr/training.hpp"

namespace fs = std::filesystem;
using namespace dpsr;

namespace {

const char* kDefaultLpipsWeights = "weights/lpips_vgg.dpsr";

std::shared_ptr<const PerceptualMetric> load_lpips(bool disabled, const std::string& path, bool explicit_path) {
  if (disabled) return nullptr;
  if (!fs::exists(path)) {
    if (explicit_path) throw LoadError("LPIPS weights not found: " + path);
    log::warn("LPIPS weights not found at ", path, "; LPIPS will be reported as NA");
    return nullptr;
  }
  return LpipsVgg::load(path);
}

// "name=dir"
std::vector<EvalSet> parse_eval_sets(const std::vector<std::string>& specs) {
  if (specs.empty()) return toy_eval_sets();
  std::vector<EvalSet> sets;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--eval-set expects name=dir, got '" + s + "'");
    sets.push_back(load_eval_set(s.substr(0, eq), s.substr(eq + 1)));
  }
  return sets;
}

// "method:dataset:report.csv"
std::vector<TableEntry> collect_entries(const std::vector<std::string>& tables, const std::vector<std::string>& evals) {
  std::vector<TableEntry> entries;
  for (const auto& t : tables) {
    auto part = read_table_csv(t);
    entries.insert(entries.end(), part.begin(), part.end());
  }
  for (const auto& e : evals) {
    const auto a = e.find(':');
    const auto b = a == std::string::npos ? a : e.find(':', a + 1);
    if (b == std::string::npos) throw ConfigError("--eval expects method:dataset:report.csv, got '" + e + "'");
    entries.push_back(TableEntry::from_report(e.substr(0, a), e.substr(a + 1, b - a - 1),
                                              MetricReport::read_csv(e.substr(b + 1))));
  }
  if (entries.empty()) throw ConfigError("no inputs: give --table and/or --eval");
  return entries;
}

struct ExperimentArgs {
  std::string config;
  std::string out;
  std::vector<std::string> eval_sets;
  std::string lpips_weights = kDefaultLpipsWeights;
  bool no_lpips = false;
  CLI::Option* lpips_option = nullptr;
};

void add_experiment_options(CLI::App* cmd, ExperimentArgs& args) {
  cmd->add_option("--config", args.config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "Run directory")->required();
  cmd->add_option("--eval-set", args.eval_sets, "Evaluation set as name=hr_dir (default: procedural toy sets)");
  args.lpips_option = cmd->add_option("--lpips-weights", args.lpips_weights, "LPIPS weight archive");
  cmd->add_flag("--no-lpips", args.no_lpips, "Skip LPIPS");
}

ExperimentResources make_resources(const TrainConfig& config, const ExperimentArgs& args) {
  ExperimentResources r;
  r.backbones = Backbones::load(config);
  r.train = std::make_shared<TrainingSet>(TrainingSet::from_directory(config.train_dir, config.scale()));
  r.eval_sets = parse_eval_sets(args.eval_sets);
  r.lpips = load_lpips(args.no_lpips, args.lpips_weights, args.lpips_option->count() > 0);
  return r;
}

void print_sweep(const SweepResult& result) {
  for (const auto& row : result.rows) {
    std::printf("%-28s %s%s\n", row.outcome.label.c_str(), row.outcome.ok ? "ok" : "FAILED: ",
                row.outcome.ok ? "" : row.outcome.error.c_str());
  }
  for (const auto& t : result.tables) std::printf("table: %s\n", t.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual perceptual loss super-resolution toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Intra-op threads for libtorch (0: library default)");

  // train
  auto* train = app.add_subcommand("train", "Train a generator");
  std::string train_config, train_resume, train_out = "runs/train";
  train->add_option("--config", train_config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", train_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM (Y channel, 4-pixel border) and LPIPS of SR vs HR");
  std::string sr_dir, hr_dir, eval_out, eval_lpips = kDefaultLpipsWeights;
  bool no_lpips = false, rgb = false, lpips_crop = false;
  int64_t border = 4, eval_scale = 4;
  int eval_threads = 1;
  eval->add_option("--sr-dir", sr_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--hr-dir", hr_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "Report CSV")->required();
  eval->add_flag("--no-lpips", no_lpips, "Skip LPIPS");
  auto* eval_lpips_opt = eval->add_option("--lpips-weights", eval_lpips, "LPIPS weight archive");
  eval->add_option("--border", border, "Border crop in pixels");
  eval->add_flag("--rgb", rgb, "Compute PSNR/SSIM on RGB instead of Y");
  eval->add_flag("--lpips-crop", lpips_crop, "Apply the border crop to LPIPS inputs");
  eval->add_option("--scale", eval_scale, "Scale factor recorded in the report metadata");
  eval->add_option("--jobs", eval_threads, "Images evaluated in parallel");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one run per mu or beta value");
  ExperimentArgs sweep_args;
  std::string sweep_param = "mu";
  std::vector<std::string> sweep_values;
  add_experiment_options(sweep, sweep_args);
  sweep->add_option("--param", sweep_param, "mu or beta")->check(CLI::IsMember({"mu", "beta"}));
  sweep->add_option("--values", sweep_values, "Values (default: 0.2 0.5 1 5 10 20 inf / beta_1_3 beta_2_4 beta_3_6 beta_4_3)");

  // ablation
  auto* ablation = app.add_subcommand("ablation", "VGG only / static ResNet term / dynamic ResNet term");
  ExperimentArgs ablation_args;
  add_experiment_options(ablation, ablation_args);

  // correlation
  auto* correlation = app.add_subcommand("correlation", "Four loss settings on SRGAN- and ESRGAN-style generators");
  ExperimentArgs correlation_args;
  add_experiment_options(correlation, correlation_args);

  // report
  auto* report = app.add_subcommand("report", "Comparison table with best/second-best marks");
  std::vector<std::string> report_tables, report_evals;
  std::string report_out, report_format = "both";
  report->add_option("--table", report_tables, "Table or summary CSV (method,dataset,psnr_db,ssim,lpips)");
  report->add_option("--eval", report_evals, "method:dataset:report.csv");
  report->add_option("--out", report_out, "Output prefix (.csv/.txt appended)")->required();
  report->add_option("--format", report_format)->check(CLI::IsMember({"csv", "text", "both"}));

  // chart
  auto* chart = app.add_subcommand("chart", "LPIPS line chart (SVG)");
  std::vector<std::string> chart_tables, chart_evals;
  std::string chart_out, chart_title = "LPIPS";
  chart->add_option("--table", chart_tables, "Table or summary CSV");
  chart->add_option("--eval", chart_evals, "method:dataset:report.csv");
  chart->add_option("--out", chart_out, "SVG file")->required();
  chart->add_option("--title", chart_title);

  // dump-features
  auto* dump = app.add_subcommand("dump-features", "Write per-channel feature maps as grayscale PNGs");
  std::string dump_image, dump_out, vgg_weights = "weights/vgg19.dpsr", resnet_weights = "weights/resnet50.dpsr";
  std::vector<std::string> dump_taps;
  std::vector<int64_t> dump_channels;
  dump->add_option("--image", dump_image)->required()->check(CLI::ExistingFile);
  dump->add_option("--tap", dump_taps, "phi_<i>_<j> or beta_<m>_<n>")->required();
  dump->add_option("--channel", dump_channels, "Zero-based channel indices")->required();
  dump->add_option("--vgg-weights", vgg_weights);
  dump->add_option("--resnet-weights", resnet_weights);
  dump->add_option("--out", dump_out)->required();

  // super-resolve
  auto* upscale = app.add_subcommand("super-resolve", "Apply a trained generator to a directory of LR PNGs");
  std::string sr_checkpoint, sr_input, sr_output;
  upscale->add_option("--checkpoint", sr_checkpoint)->required()->check(CLI::ExistingFile);
  upscale->add_option("--input", sr_input)->required()->check(CLI::ExistingDirectory);
  upscale->add_option("--out", sr_output)->required();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Cut manifest images into tiles named <source>_<y>_<x>.png");
  std::string manifest, prepare_out;
  int64_t tile = 480, stride = 480;
  prepare->add_option("--manifest", manifest, "Text file with one image path per line")->required()->check(CLI::ExistingFile);
  prepare->add_option("--out", prepare_out)->required();
  prepare->add_option("--tile", tile);
  prepare->add_option("--stride", stride);

  // make-toy-dataset
  auto* toy = app.add_subcommand("make-toy-dataset", "Write seeded procedural training images");
  std::string toy_out;
  int toy_count = 16;
  int64_t toy_size = 64;
  uint64_t toy_seed = 0;
  toy->add_option("--out", toy_out)->required();
  toy->add_option("--count", toy_count);
  toy->add_option("--size", toy_size);
  toy->add_option("--seed", toy_seed);

  // init-backbones
  auto* init = app.add_subcommand("init-backbones", "Write seeded stand-in VGG19/ResNet50/LPIPS weights");
  std::string init_out = "weights";
  uint64_t init_seed = 0;
  init->add_option("--out", init_out);
  init->add_option("--seed", init_seed);

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) torch::set_num_threads(threads);

  try {
    if (*train) {
      const auto config = load_train_config(train_config);
      const auto dataset = TrainingSet::from_directory(config.train_dir, config.scale());
      std::optional<fs::path> resume;
      if (!train_resume.empty()) resume = train_resume;
      const auto log_every = std::max<int64_t>(1, config.total_iterations / 20);
      const auto result = run_training(config, dataset, train_out, resume, [&](const StepRecord& r) {
        if ((r.iteration + 1) % log_every == 0)
          std::printf("iter %7lld  total %.6f  l_vgg %.6f  l_res %.6f  zeta %.4f  lr %.3g\n",
                      static_cast<long long>(r.iteration + 1), r.total, r.dp.l_vgg, r.dp.l_res, r.dp.zeta, r.lr);
      });
      std::printf("checkpoint: %s\nloss log: %s\n", result.final_checkpoint.string().c_str(),
                  result.loss_log.string().c_str());
    } else if (*eval) {
      EvalOptions options;
      options.border = border;
      options.y_channel = !rgb;
      options.scale = eval_scale;
      options.lpips_crop = lpips_crop;
      options.threads = eval_threads;
      options.lpips = load_lpips(no_lpips, eval_lpips, eval_lpips_opt->count() > 0);
      const auto result = evaluate_dataset(sr_dir, hr_dir, options);
      result.write_csv(eval_out);
      std::printf("%zu images  PSNR %.4f dB  SSIM %.4f  LPIPS %s\n", result.rows.size(), result.mean_psnr_db,
                  result.mean_ssim, result.mean_lpips ? format_real(*result.mean_lpips).c_str() : "NA");
    } else if (*sweep) {
      const auto config = load_train_config(sweep_args.config);
      SweepSpec spec;
      spec.parameter = sweep_param == "mu" ? SweepParameter::mu : SweepParameter::beta_tap;
      spec.values = sweep_values.empty() ? SweepSpec::default_values(spec.parameter) : sweep_values;
      spec.validate();
      print_sweep(run_sweep(spec, config, make_resources(config, sweep_args), sweep_args.out));
    } else if (*ablation) {
      const auto config = load_train_config(ablation_args.config);
      print_sweep(run_ablation(config, make_resources(config, ablation_args), ablation_args.out));
    } else if (*correlation) {
      const auto config = load_train_config(correlation_args.config);
      const auto result = run_correlation(config, make_resources(config, correlation_args), correlation_args.out);
      print_sweep(result.srgan);
      print_sweep(result.esrgan);
      std::printf("rank order: %s\n", result.rank_order.string().c_str());
    } else if (*report) {
      const auto format = report_format == "csv" ? TableFormat::csv
                          : report_format == "text" ? TableFormat::text
                                                    : TableFormat::both;
      const auto written = emit_comparison_table(collect_entries(report_tables, report_evals), report_out, format);
      for (const auto& p : written) std::printf("%s\n", p.string().c_str());
      if (format != TableFormat::csv) {
        std::ifstream text(written.back());
        std::cout << text.rdbuf();
      }
    } else if (*chart) {
      emit_lpips_chart(collect_entries(chart_tables, chart_evals), chart_out, chart_title);
      std::printf("%s\n", chart_out.c_str());
    } else if (*dump) {
      std::vector<FeatureTap> taps;
      for (const auto& t : dump_taps) taps.push_back(FeatureTap::parse(t));
      Backbones backbones;
      for (const auto& t : taps) {
        if (t.backbone == BackboneKind::vgg19 && !backbones.vgg)
          backbones.vgg = PretrainedBackbone::load(BackboneKind::vgg19, vgg_weights);
        if (t.backbone == BackboneKind::resnet50 && !backbones.resnet)
          backbones.resnet = PretrainedBackbone::load(BackboneKind::resnet50, resnet_weights);
      }
      for (const auto& p : dump_feature_channels(read_png(dump_image), taps, dump_channels, backbones, dump_out))
        std::printf("%s\n", p.string().c_str());
    } else if (*upscale) {
      auto generator = load_generator(sr_checkpoint);
      fs::create_directories(sr_output);
      for (const auto& path : list_pngs(sr_input)) {
        write_png(fs::path(sr_output) / path.filename(), super_resolve(generator, read_png(path)));
        std::printf("%s\n", (fs::path(sr_output) / path.filename()).string().c_str());
      }
    } else if (*prepare) {
      const auto written = prepare_tiles(manifest, prepare_out, tile, stride);
      std::printf("%zu tiles written to %s\n", written.size(), prepare_out.c_str());
    } else if (*toy) {
      const auto written = write_toy_dataset(toy_out, toy_count, toy_size, toy_seed);
      std::printf("%zu images written to %s\n", written.size(), toy_out.c_str());
    } else if (*init) {
      for (const auto& p : write_surrogate_weights(init_out, init_seed)) std::printf("%s\n", p.string().c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
