#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcf/checkpoint.hpp"
#include "mcf/confusion.hpp"
#include "mcf/image_io.hpp"
#include "mcf/network.hpp"
#include "mcf/profile.hpp"
#include "mcf/run_config.hpp"
#include "mcf/synthetic.hpp"
#include "mcf/train_loop.hpp"

namespace fs = std::filesystem;

namespace mcf::cli {

namespace {

constexpr const char* kReportHeader = "model,resolution,params,macs,miou,fps";

// Thrown for missing inputs; always maps to exit code 2.
class MissingFile : public Error {
 public:
  explicit MissingFile(const fs::path& path) : Error("no such file: " + path.string()) {}
};

struct Resolution {
  int height = 0;
  int width = 0;
  std::string str() const { return std::to_string(height) + "x" + std::to_string(width); }
};

Resolution parse_resolution(const std::string& text) {
  int h = 0, w = 0;
  char x = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &h, &x, &w, &extra) != 3 || (x != 'x' && x != 'X') ||
      h <= 0 || w <= 0) {
    throw ConfigError("resolution must look like HxW, got '" + text + "'");
  }
  return {h, w};
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFile(path);
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  require_file(path);
  RunConfig cfg = RunConfig::from_file(path);
  cfg.apply_environment();
  for (const auto& o : overrides) cfg.set_override(o);
  return cfg;
}

fs::path sidecar_path(const fs::path& checkpoint) { return checkpoint.string() + ".cfg"; }

// Rebuilds the model described by the checkpoint's sidecar and loads weights.
std::unique_ptr<Mcfnet<float>> load_model(const fs::path& checkpoint, RunConfig* cfg_out = nullptr) {
  require_file(checkpoint);
  require_file(sidecar_path(checkpoint));
  RunConfig cfg = RunConfig::from_file(sidecar_path(checkpoint));
  auto model = std::make_unique<Mcfnet<float>>(cfg.model_config());
  auto params = model->parameters();
  load_checkpoint(params, checkpoint);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

std::string model_name(const ModelConfig& m) {
  std::string name = "baseline";
  if (m.use_lgate) name += "+lgate";
  if (m.use_cffm) name += "+cffm";
  if (m.use_cfrm) name += "+cfrm";
  return name;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::vector<SegSample> training_data(const RunConfig& cfg) {
  const std::string dir = cfg.get("data.dir");
  if (dir.empty()) return generate_synthetic_dataset(cfg.synth_spec());
  if (!fs::is_directory(dir)) throw MissingFile(dir);
  return load_directory_dataset(dir);
}

int cmd_train(const fs::path& config, const fs::path& out_dir, const std::vector<std::string>& sets,
              std::ostream& out) {
  RunConfig cfg = load_run_config(config, sets);
  const ModelConfig mc = cfg.model_config();
  const TrainConfig tc = cfg.train_config();
  const auto data = training_data(cfg);
  if (data.empty()) throw Error("training set is empty");

  fs::create_directories(out_dir);
  Mcfnet<float> model(mc);
  std::ofstream log(out_dir / "train_log.csv", std::ios::binary | std::ios::trunc);
  if (!log) throw Error("cannot write " + (out_dir / "train_log.csv").string());
  write_training_csv_header(log);
  const auto records = train_loop(model, data, tc, [&](const IterationRecord& r) {
    write_training_csv_row(log, r);
    log.flush();
  });

  auto params = model.parameters();
  save_checkpoint(params, out_dir / "model.mcf");
  std::ofstream side(sidecar_path(out_dir / "model.mcf"), std::ios::binary | std::ios::trunc);
  side << cfg.to_string();
  if (!side) throw Error("cannot write " + sidecar_path(out_dir / "model.mcf").string());

  out << "trained " << records.size() << " iterations, final loss "
      << fmt("%.6f", records.empty() ? 0.0 : records.back().loss) << "\n";
  out << "checkpoint " << (out_dir / "model.mcf").string() << "\n";
  return 0;
}

struct EvalOptions {
  fs::path checkpoint;
  fs::path data;
  fs::path report = "eval_report.csv";
  std::string name;
  bool exclude_background = false;
  int warmup = 2;
  int runs = 5;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  RunConfig cfg;
  auto model = load_model(o.checkpoint, &cfg);
  if (!fs::is_directory(o.data)) throw MissingFile(o.data);
  const auto samples = load_directory_dataset(o.data);
  if (samples.empty()) throw Error("no images in " + o.data.string());

  const ModelConfig mc = model->config();
  ConfusionMatrix cm(mc.num_classes);
  {
    NoGradGuard no_grad;
    for (const auto& s : samples) {
      const SegBatch batch = make_batch(std::span<const SegSample>(&s, 1));
      cm.update(argmax_labels(model->forward(batch.images, false)), batch.labels);
    }
  }
  const bool exclude = o.exclude_background || cfg.get_bool("eval.exclude_background");
  const IouReport iou = mean_iou(cm, exclude);
  const Resolution res{samples.front().height, samples.front().width};
  const ModelCost cost = count_params_flops(*model, res.height, res.width);
  const BenchTiming timing = fps_benchmark(*model, res.height, res.width, o.warmup, o.runs);

  std::ofstream report(o.report, std::ios::binary | std::ios::trunc);
  if (!report) throw Error("cannot write " + o.report.string());
  report << kReportHeader << "\n"
         << (o.name.empty() ? model_name(mc) : o.name) << ',' << res.str() << ',' << cost.parameters
         << ',' << cost.macs << ',' << fmt("%.6f", iou.miou) << ',' << fmt("%.3f", timing.fps) << "\n";

  fs::path per_class = o.report;
  per_class.replace_filename(o.report.stem().string() + "_per_class.csv");
  std::ofstream pc(per_class, std::ios::binary | std::ios::trunc);
  if (!pc) throw Error("cannot write " + per_class.string());
  pc << "class,iou\n";
  for (std::size_t c = 0; c < iou.per_class.size(); ++c) {
    pc << c << ',' << (std::isnan(iou.per_class[c]) ? std::string("nan") : fmt("%.6f", iou.per_class[c]))
       << "\n";
  }

  out << "pixel_accuracy " << fmt("%.6f", cm.pixel_accuracy()) << "\n";
  out << "miou " << fmt("%.6f", iou.miou) << "\n";
  return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& image, const fs::path& out_path,
              std::ostream& out) {
  auto model = load_model(checkpoint);
  require_file(image);
  const Image8 rgb = read_png(image, 3);
  const Image8 blank{rgb.width, rgb.height, 1,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(rgb.width) * rgb.height,
                                               kIgnoreLabel)};
  const SegSample sample = sample_from_png(rgb, blank);
  NoGradGuard no_grad;
  const SegBatch batch = make_batch(std::span<const SegSample>(&sample, 1));
  const LabelMap pred = argmax_labels(model->forward(batch.images, false));
  write_png(out_path, Image8{pred.w, pred.h, 1, pred.values});
  out << "wrote " << out_path.string() << "\n";
  return 0;
}

struct BenchOptions {
  fs::path checkpoint;
  std::string res;
  fs::path report = "bench_report.csv";
  std::string name;
  std::optional<double> miou;
  int warmup = 3;
  int runs = 10;
};

int cmd_bench(const BenchOptions& o, std::ostream& out) {
  const Resolution res = parse_resolution(o.res);
  auto model = load_model(o.checkpoint);
  if (o.miou && !(*o.miou >= 0.0 && *o.miou <= 1.0)) throw ConfigError("--miou must be in [0, 1]");
  const ModelCost cost = count_params_flops(*model, res.height, res.width);
  const BenchTiming timing = fps_benchmark(*model, res.height, res.width, o.warmup, o.runs);

  const bool fresh = !fs::exists(o.report) || fs::file_size(o.report) == 0;
  std::ofstream report(o.report, std::ios::binary | std::ios::app);
  if (!report) throw Error("cannot write " + o.report.string());
  if (fresh) report << kReportHeader << "\n";
  report << (o.name.empty() ? model_name(model->config()) : o.name) << ',' << res.str() << ','
         << cost.parameters << ',' << cost.macs << ',' << (o.miou ? fmt("%.6f", *o.miou) : "")
         << ',' << fmt("%.3f", timing.fps) << "\n";

  out << "fps " << fmt("%.3f", timing.fps) << " (mean " << fmt("%.6f", timing.mean_seconds)
      << " s, stddev " << fmt("%.6f", timing.stddev_seconds) << " s over " << timing.timed_runs
      << " runs)\n";
  return 0;
}

int cmd_params(const fs::path& config, const std::string& res_text,
               const std::vector<std::string>& sets, std::ostream& out) {
  RunConfig cfg = load_run_config(config, sets);
  const int size = cfg.get_int("data.image_size");
  const Resolution res = res_text.empty() ? Resolution{size, size} : parse_resolution(res_text);
  Mcfnet<float> model(cfg.model_config());
  const ModelCost cost = count_params_flops(model, res.height, res.width);
  out << "parameters " << cost.parameters << "\n";
  out << "macs " << cost.macs << " at " << res.str() << "\n";
  return 0;
}

int cmd_synth(const fs::path& config, const fs::path& out_dir, const std::vector<std::string>& sets,
              std::ostream& out) {
  RunConfig cfg = load_run_config(config, sets);
  const auto samples = generate_synthetic_dataset(cfg.synth_spec());
  write_directory_dataset(out_dir, samples);
  out << "wrote " << samples.size() << " samples to " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MCFNet segmentation toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> sets;
  fs::path config, out_dir = "run";
  auto* train = app.add_subcommand("train", "train a model, write checkpoint and training CSV");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--set", sets, "override key=value");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a PNG directory");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--data", ev.data, "directory of <stem>_img.png/<stem>_lab.png")->required();
  eval->add_option("--out", ev.report, "report CSV");
  eval->add_option("--name", ev.name, "model name in the report");
  eval->add_flag("--exclude-background", ev.exclude_background, "drop class 0 from the mean");
  eval->add_option("--warmup", ev.warmup)->check(CLI::NonNegativeNumber);
  eval->add_option("--runs", ev.runs)->check(CLI::PositiveNumber);

  fs::path checkpoint, image, infer_out;
  auto* infer = app.add_subcommand("infer", "predict a class map for one image");
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--image", image)->required();
  infer->add_option("--out", infer_out, "output PNG")->required();

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "time inference and append a report row");
  bench->add_option("--checkpoint", bo.checkpoint)->required();
  bench->add_option("--res", bo.res, "HxW")->required();
  bench->add_option("--out", bo.report, "report CSV (appended)");
  bench->add_option("--name", bo.name);
  bench->add_option("--miou", bo.miou, "mIoU to record with the timing");
  bench->add_option("--warmup", bo.warmup)->check(CLI::NonNegativeNumber);
  bench->add_option("--runs", bo.runs)->check(CLI::PositiveNumber);

  std::string res_text;
  auto* params = app.add_subcommand("params", "print parameter and MAC counts");
  params->add_option("--config", config)->required();
  params->add_option("--res", res_text, "HxW");
  params->add_option("--set", sets, "override key=value");

  auto* synth = app.add_subcommand("synth", "write the synthetic dataset as PNGs");
  synth->add_option("--config", config)->required();
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--set", sets, "override key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(config, out_dir, sets, out);
    if (*eval) return cmd_eval(ev, out);
    if (*infer) return cmd_infer(checkpoint, image, infer_out, out);
    if (*bench) return cmd_bench(bo, out);
    if (*params) return cmd_params(config, res_text, sets, out);
    if (*synth) return cmd_synth(config, out_dir, sets, out);
  } catch (const UnknownKeyError& e) {
    err << "error: unknown config key '" << e.key() << "'\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace mcf::cli
