#include "spnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "spnet/analysis.hpp"
#include "spnet/annotations.hpp"
#include "spnet/augment.hpp"
#include "spnet/errors.hpp"
#include "spnet/eval.hpp"
#include "spnet/model.hpp"
#include "spnet/synthgen.hpp"
#include "spnet/train.hpp"

namespace spnet {

namespace fs = std::filesystem;

namespace {

constexpr const char* kEchoFile = "run_config.ini";

// ---------------------------------------------------------------- options

struct GenOptions {
  std::string out;
  int n = 100;
  std::uint64_t seed = 0;
  std::string preset = "desk";
  int size = 64;
  std::optional<int> width, height;
  std::optional<int> min_antinodes, max_antinodes;
  std::optional<int> min_rings, max_rings;
  std::optional<double> min_axis, max_axis;
  std::optional<double> noise, blur;
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
};

struct TrainOptions {
  std::string data, out, resume;
  int epochs = 100;
  int stop_after = 0;
  int batch_size = 8;
  double lr = 1e-3;
  double pct_start = 0.3;
  std::uint64_t seed = 0;
  std::string loss = "squared";
  int stage1_copies = 41;
  bool no_stage2 = false;
  int eval_every = 1;
  double threshold = 0.5;
  int input_size = 64;
  std::string stages = "16,32,64";
  int head_width = 512;
  double dropout = 0.1;
  double weight_decay = 1e-4;
  bool batch_norm = false;
  double rings_max = kDefaultRingsMax;
};

struct EvalOptions {
  std::string data, out, pred_dir, checkpoint;
  std::string split = "test";
  double threshold = 0.5;
  double sigma = kVolunteerSigma;
};

struct InferOptions {
  std::string checkpoint, data, images, out;
  std::string split = "all";
  double threshold = 0.5;
  bool raw = false;
  bool overlay = false;
};

struct AnalyzeOptions {
  std::string pred_dir, out;
  std::optional<double> frame_rate;
  std::vector<std::string> regions;
};

// ---------------------------------------------------------------- helpers

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return (env && *env) ? fs::path(env) : fs::path("spnet_runs");
}

fs::path resolve_out(const std::string& given, const char* command) {
  return given.empty() ? output_root() / command : fs::path(given);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

void append_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

/// Options as given (replayable with --config) followed by the resolved values as comments.
void write_echo(const CLI::App& app, const fs::path& dir, const std::string& resolved) {
  std::string text = app.config_to_str(false, false);
  if (!resolved.empty()) {
    text += "\n; resolved settings\n";
    std::istringstream in(resolved);
    std::string line;
    while (std::getline(in, line)) text += "; " + line + '\n';
  }
  write_text(dir / kEchoFile, text);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad integer list: " + text);
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

std::optional<Split> parse_split_filter(const std::string& text) {
  if (text == "all") return std::nullopt;
  return parse_split(text);
}

std::vector<Scene> load_scenes(const fs::path& dir, const DatasetManifest& m) {
  std::vector<Scene> scenes;
  scenes.reserve(m.records.size());
  for (const auto& r : m.records) {
    scenes.push_back({read_png((dir / r.image_path).string()), r.annotations});
  }
  return scenes;
}

std::vector<Image> load_images(const fs::path& dir, const DatasetManifest& m) {
  std::vector<Image> images;
  images.reserve(m.records.size());
  for (const auto& r : m.records) images.push_back(read_png((dir / r.image_path).string()));
  return images;
}

std::vector<std::vector<Detection>> read_predictions(const fs::path& dir,
                                                     const DatasetManifest& frames) {
  std::vector<std::vector<Detection>> out;
  for (const auto& r : frames.records) {
    const fs::path file = dir / annotation_filename(r.frame_index);
    out.push_back(fs::exists(file) ? read_detection_csv(file) : std::vector<Detection>{});
  }
  return out;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// ---------------------------------------------------------------- overlays

// 3×5 glyphs for digits and the decimal point, one row per entry, MSB left.
const std::uint8_t kGlyphs[11][5] = {
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
    {0, 0, 0, 0, 2}};

void put(Image& img, int x, int y, float v) {
  if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = v;
}

void draw_text(Image& img, int x, int y, const std::string& text, int scale, float v) {
  for (char ch : text) {
    const int g = ch == '.' ? 10 : (ch >= '0' && ch <= '9' ? ch - '0' : -1);
    if (g >= 0) {
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if (!(kGlyphs[g][row] & (4 >> col))) continue;
          for (int sy = 0; sy < scale; ++sy) {
            for (int sx = 0; sx < scale; ++sx) put(img, x + col * scale + sx, y + row * scale + sy, v);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

void draw_ellipse(Image& img, const Ellipse& e, double scale, float v) {
  const double t = e.theta * std::numbers::pi / 180.0;
  const int steps = std::max(64, static_cast<int>(8.0 * scale * (e.a + e.b)));
  for (int k = 0; k < steps; ++k) {
    const double u = 2.0 * std::numbers::pi * k / steps;
    const double px = e.a * std::cos(u);
    const double py = e.b * std::sin(u);
    const double x = e.cx + px * std::cos(t) - py * std::sin(t);
    const double y = e.cy + px * std::sin(t) + py * std::cos(t);
    put(img, static_cast<int>(std::lround((x + 0.5) * scale - 0.5)),
        static_cast<int>(std::lround((y + 0.5) * scale - 0.5)), v);
  }
}

/// Upscaled frame with truth (white, count above) and predictions (black, count below).
Image render_overlay(const Image& frame, const std::vector<Annotation>& truths,
                     const std::vector<Detection>& dets) {
  const int k = std::max(1, 256 / std::max(1, frame.width));
  Image img(frame.width * k, frame.height * k);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) img.at(x, y) = frame.at(x / k, y / k);
  }
  const int text_scale = 2;
  const int text_h = 5 * text_scale;
  for (const auto& t : truths) {
    draw_ellipse(img, t.ellipse, k, 255.0f);
    const auto [hx, hy] = bounding_half_extents(t.ellipse);
    draw_text(img, static_cast<int>(t.ellipse.cx * k) - 6,
              static_cast<int>((t.ellipse.cy - hy) * k) - text_h - 2, fmt("%.1f", t.rings),
              text_scale, 255.0f);
  }
  for (const auto& d : dets) {
    draw_ellipse(img, d.ellipse, k, 0.0f);
    const auto [hx, hy] = bounding_half_extents(d.ellipse);
    draw_text(img, static_cast<int>(d.ellipse.cx * k) - 6,
              static_cast<int>((d.ellipse.cy + hy) * k) + 3, fmt("%.1f", d.rings), text_scale,
              0.0f);
  }
  return img;
}

// ---------------------------------------------------------------- commands

SceneConfig scene_config(const GenOptions& o) {
  SceneConfig cfg;
  if (o.preset == "desk") {
    cfg = SceneConfig::desk(o.size);
  } else if (o.preset != "full") {
    throw ConfigError("unknown preset: " + o.preset);
  }
  if (o.width) cfg.width = *o.width;
  if (o.height) cfg.height = *o.height;
  if (o.min_antinodes) cfg.n_antinodes.min = *o.min_antinodes;
  if (o.max_antinodes) cfg.n_antinodes.max = *o.max_antinodes;
  if (o.min_rings) cfg.rings.min = *o.min_rings;
  if (o.max_rings) cfg.rings.max = *o.max_rings;
  if (o.min_axis) cfg.axis.min = *o.min_axis;
  if (o.max_axis) cfg.axis.max = *o.max_axis;
  if (o.noise) cfg.noise_sigma = *o.noise;
  if (o.blur) cfg.blur_sigma = *o.blur;
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

std::string describe(const SceneConfig& c) {
  std::ostringstream s;
  s << "width=" << c.width << "\nheight=" << c.height << "\nantinodes=" << c.n_antinodes.min
    << ".." << c.n_antinodes.max << "\nrings=" << c.rings.min << ".." << c.rings.max
    << "\naxis=" << c.axis.min << ".." << c.axis.max << "\naspect=" << c.aspect.min << ".."
    << c.aspect.max << "\nnoise_sigma=" << c.noise_sigma << "\nblur_sigma=" << c.blur_sigma
    << "\nseed=" << c.seed << '\n';
  return s.str();
}

int cmd_gen(const CLI::App& app, const GenOptions& o, std::ostream& out) {
  const SceneConfig cfg = scene_config(o);
  const fs::path dir = resolve_out(o.out, "gen");
  ensure_dir(dir);
  write_echo(app, dir, describe(cfg));
  const DatasetManifest m = generate_dataset(cfg, o.n, dir, {o.train_frac, o.val_frac, o.test_frac});
  std::size_t antinodes = 0;
  for (const auto& r : m.records) antinodes += r.annotations.size();
  out << "generated " << m.records.size() << " images with " << antinodes
      << " antinodes (seed " << o.seed << ") in " << dir.string() << '\n';
  return kExitOk;
}

ModelConfig model_config(const TrainOptions& o) {
  ModelConfig mc;
  mc.input_size = o.input_size;
  mc.stage_channels = parse_int_list(o.stages);
  mc.head_width = o.head_width;
  mc.dropout_rate = o.dropout;
  mc.weight_decay = o.weight_decay;
  mc.batch_norm = o.batch_norm;
  mc.rings_max = o.rings_max;
  mc.seed = o.seed;
  mc.validate();
  return mc;
}

double best_score_in_history(const fs::path& file, int up_to_epoch, bool use_val) {
  double best = std::numeric_limits<double>::infinity();
  const auto lines = read_lines(file);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::stringstream ss(lines[i]);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 3 || std::stoi(f[0]) > up_to_epoch) continue;
    best = std::min(best, std::stod(use_val ? f[2] : f[1]));
  }
  return best;
}

int cmd_train(const CLI::App& app, const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const fs::path data(o.data);
  const DatasetManifest all = read_annotations(data);
  const DatasetManifest train_m = all.subset(Split::train);
  const DatasetManifest val_m = all.subset(Split::val);
  if (train_m.records.empty()) throw ConfigError("dataset has no training frames");

  std::optional<Checkpoint> resume;
  if (!o.resume.empty()) resume = load_checkpoint(o.resume);
  const ModelConfig mc = resume ? resume->model : model_config(o);

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.max_lr = o.lr;
  tc.pct_start = o.pct_start;
  tc.stage2 = !o.no_stage2;
  tc.threshold = o.threshold;
  tc.eval_every = o.eval_every;
  tc.seed = o.seed;
  if (o.loss == "cross-entropy") {
    tc.loss.existence_mode = ExistenceMode::cross_entropy;
  } else if (o.loss != "squared") {
    throw ConfigError("unknown loss mode: " + o.loss);
  }
  AugmentConfig aug = AugmentConfig::desk(all.image_width > 0 ? all.image_width : 64);
  aug.stage1_copies = o.stage1_copies;
  aug.seed = o.seed;

  const fs::path dir = resolve_out(o.out, "train");
  ensure_dir(dir);
  write_echo(app, dir, mc.to_text());

  const std::vector<TrainSample> train_set =
      make_samples(stage1_expand(load_scenes(data, train_m), aug, mc), mc);
  const std::vector<TrainSample> val_set = make_samples(load_scenes(data, val_m), mc);
  out << "training on " << train_set.size() << " frames (" << train_m.records.size()
      << " before stage-1 expansion), validating on " << val_set.size() << '\n';

  const fs::path history = dir / "history.csv";
  const bool use_val = !val_set.empty();
  double best = std::numeric_limits<double>::infinity();
  if (resume) {
    // Keep the rows up to the resumed epoch so numbering stays continuous.
    std::string kept = history_csv_header() + '\n';
    const auto lines = read_lines(history);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (std::stoi(lines[i].substr(0, lines[i].find(','))) <= resume->epoch) kept += lines[i] + '\n';
    }
    write_text(history, kept);
    best = best_score_in_history(history, resume->epoch, use_val);
  } else {
    write_text(history, history_csv_header() + '\n');
  }

  Detector model = resume ? restore_model(*resume) : Detector(mc);
  struct StopRequested {};
  const auto on_epoch = [&](const EpochRecord& rec, const Checkpoint& last) {
    append_text(history, history_csv_row(rec) + '\n');
    save_checkpoint(last, dir / "last.ckpt");
    const bool evaluated = !use_val || tc.eval_every <= 1 || rec.epoch % tc.eval_every == 0 ||
                           rec.epoch == tc.epochs;
    const double score = use_val ? rec.val_loss : rec.train_loss;
    if (evaluated && score < best) {
      best = score;
      save_checkpoint(last, dir / "best.ckpt");
    }
    out << "epoch " << rec.epoch << '/' << tc.epochs << " train_loss=" << fmt("%.6g", rec.train_loss)
        << (use_val ? " val_loss=" + fmt("%.6g", rec.val_loss) +
                          " val_ring_acc=" + fmt("%.4f", rec.val_ring_acc) +
                          " val_map=" + fmt("%.4f", rec.val_map)
                    : std::string())
        << " lr=" << fmt("%.3g", rec.lr) << '\n';
    if (o.stop_after > 0 && rec.epoch >= o.stop_after && rec.epoch < tc.epochs) throw StopRequested{};
  };
  try {
    train(model, train_set, val_set, tc, aug, resume ? &*resume : nullptr, on_epoch);
  } catch (const StopRequested&) {
    out << "stopped after epoch " << o.stop_after << "; resume with --resume "
        << (dir / "last.ckpt").string() << '\n';
    return kExitOk;
  } catch (const TrainingDiverged& e) {
    save_checkpoint(e.last_good(), dir / "last_good.ckpt");
    err << "error: " << e.what() << "; last good checkpoint saved to "
        << (dir / "last_good.ckpt").string() << '\n';
    return kExitDiverged;
  }
  out << "checkpoints written to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const CLI::App& app, const EvalOptions& o, std::ostream& out) {
  if (o.pred_dir.empty() == o.checkpoint.empty()) {
    throw ConfigError("give exactly one of --pred-dir or --checkpoint");
  }
  const fs::path data(o.data);
  const DatasetManifest truth = read_annotations(data, parse_split_filter(o.split));
  std::vector<std::vector<Detection>> dets;
  if (!o.pred_dir.empty()) {
    dets = read_predictions(o.pred_dir, truth);
  } else {
    Detector model = restore_model(load_checkpoint(o.checkpoint));
    dets = infer(model, load_images(data, truth), o.threshold);
  }
  std::vector<std::vector<Annotation>> truths;
  for (const auto& r : truth.records) truths.push_back(r.annotations);

  const fs::path dir = resolve_out(o.out, "eval");
  ensure_dir(dir);
  write_echo(app, dir, "");
  const EvalReport report = evaluate(dets, truths, o.sigma);
  write_text(dir / "metrics.csv", report_csv(report));
  write_text(dir / "summary.txt", report_summary(report));
  out << report_summary(report);
  return kExitOk;
}

int cmd_infer(const CLI::App& app, const InferOptions& o, std::ostream& out) {
  if (o.data.empty() == o.images.empty()) throw ConfigError("give exactly one of --data or --images");
  DatasetManifest frames;
  fs::path base;
  if (!o.data.empty()) {
    base = o.data;
    frames = read_annotations(base, parse_split_filter(o.split));
  } else {
    base = o.images;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(base)) {
      if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    for (std::size_t i = 0; i < names.size(); ++i) {
      frames.records.push_back({names[i], static_cast<int>(i), {}, Split::test});
    }
    frames.name = "frames";
  }

  Detector model = restore_model(load_checkpoint(o.checkpoint));
  const std::vector<Image> images = load_images(base, frames);
  const auto dets = infer(model, images, o.threshold, o.raw ? DecodeMode::raw : DecodeMode::normalized);

  const fs::path dir = resolve_out(o.out, "infer");
  ensure_dir(dir);
  write_echo(app, dir, "");
  DatasetManifest result;
  result.name = "detections";
  if (!images.empty()) {
    result.image_width = images[0].width;
    result.image_height = images[0].height;
  }
  for (const auto& r : frames.records) {
    const fs::path image = fs::absolute(base / r.image_path).lexically_normal();
    result.records.push_back({image.string(), r.frame_index, {}, r.split});
  }
  write_annotations(result, dir);
  std::size_t total = 0;
  for (std::size_t i = 0; i < frames.records.size(); ++i) {
    write_detection_csv(dir / annotation_filename(frames.records[i].frame_index), dets[i]);
    total += dets[i].size();
  }
  if (o.overlay) {
    ensure_dir(dir / "overlays");
    for (std::size_t i = 0; i < frames.records.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "frame_%06d.png", frames.records[i].frame_index);
      write_png(render_overlay(images[i], frames.records[i].annotations, dets[i]),
                (dir / "overlays" / name).string());
    }
  }
  out << "wrote " << total << " detections for " << frames.records.size() << " frames to "
      << dir.string() << '\n';
  return kExitOk;
}

int cmd_analyze(const CLI::App& app, const AnalyzeOptions& o, std::ostream& out, std::ostream& err) {
  if (!(*o.frame_rate > 0.0)) throw ConfigError("--frame-rate must be positive");
  const fs::path pred(o.pred_dir);
  DatasetManifest frames = read_annotations(pred);
  std::sort(frames.records.begin(), frames.records.end(),
            [](const FrameRecord& a, const FrameRecord& b) { return a.frame_index < b.frame_index; });
  const auto dets = read_predictions(pred, frames);
  std::vector<int> indices;
  for (const auto& r : frames.records) indices.push_back(r.frame_index);

  const fs::path dir = resolve_out(o.out, "analyze");
  ensure_dir(dir);
  write_echo(app, dir, "");

  std::string fit_text = fit_csv_header() + '\n';
  for (const std::string& spec : o.regions) {
    const NoteRegion region = parse_region(spec);
    try {
      const FitResult fit = fit_abs_cos(assemble_series(dets, region, *o.frame_rate));
      fit_text += fit_csv_row(region.label, fit) + '\n';
      out << region.label << ": f=" << fmt("%.2f", fit.freq_hz) << " Hz, A="
          << fmt("%.3f", std::abs(fit.amplitude)) << " rings\n";
    } catch (const EmptySeries& e) {
      err << "warning: region " << region.label << ": " << e.what() << '\n';
    } catch (const NoOscillation& e) {
      err << "warning: region " << region.label << ": " << e.what() << '\n';
    } catch (const FitDiverged& e) {
      err << "warning: region " << region.label << ": " << e.what() << "; writing best iterate\n";
      fit_text += fit_csv_row(region.label, e.best()) + '\n';
    }
  }
  write_text(dir / "fit.csv", fit_text);
  write_text(dir / "area_vs_rings.csv", area_csv(export_area_vs_rings(dets, indices)));
  std::size_t skipped = 0;
  write_text(dir / "ecc2_vs_rings.csv", ecc2_csv(export_ecc2_vs_rings(dets, indices, &skipped)));
  if (skipped > 0) err << "warning: skipped " << skipped << " detections with zero major axis\n";
  out << "analysis written to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detection and analysis of vibrating-drum interferometry antinodes", "spnet"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "Read options from an INI file (e.g. a run_config.ini echo)");
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->fallthrough();
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--n", gen.n, "Number of images")->check(CLI::NonNegativeNumber);
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--preset", gen.preset, "Scene preset: desk or full")->check(CLI::IsMember({"desk", "full"}));
  g->add_option("--size", gen.size, "Frame side for the desk preset")->check(CLI::PositiveNumber);
  g->add_option("--width", gen.width, "Frame width override");
  g->add_option("--height", gen.height, "Frame height override");
  g->add_option("--min-antinodes", gen.min_antinodes);
  g->add_option("--max-antinodes", gen.max_antinodes);
  g->add_option("--min-rings", gen.min_rings);
  g->add_option("--max-rings", gen.max_rings);
  g->add_option("--min-axis", gen.min_axis, "Smallest semi-major axis, pixels");
  g->add_option("--max-axis", gen.max_axis, "Largest semi-major axis, pixels");
  g->add_option("--noise", gen.noise, "Pixel noise sigma, gray levels");
  g->add_option("--blur", gen.blur, "Blur sigma, pixels");
  g->add_option("--train-frac", gen.train_frac);
  g->add_option("--val-frac", gen.val_frac);
  g->add_option("--test-frac", gen.test_frac);

  TrainOptions tr;
  CLI::App* t = app.add_subcommand("train", "Train a detector on a generated dataset");
  t->fallthrough();
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");
  t->add_option("--epochs", tr.epochs, "Length of the learning-rate schedule")->check(CLI::PositiveNumber);
  t->add_option("--stop-after", tr.stop_after, "Stop after this epoch (resume later with the same --epochs)")
      ->check(CLI::NonNegativeNumber);
  t->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.lr, "Peak learning rate")->check(CLI::NonNegativeNumber);
  t->add_option("--pct-start", tr.pct_start, "Fraction of steps spent warming up");
  t->add_option("--seed", tr.seed);
  t->add_option("--loss", tr.loss, "Existence loss: squared or cross-entropy")
      ->check(CLI::IsMember({"squared", "cross-entropy"}));
  t->add_option("--stage1-copies", tr.stage1_copies, "Copies per frame after geometric augmentation")
      ->check(CLI::PositiveNumber);
  t->add_flag("--no-stage2", tr.no_stage2, "Disable per-epoch photometric augmentation");
  t->add_option("--eval-every", tr.eval_every);
  t->add_option("--threshold", tr.threshold, "Existence threshold for validation metrics");
  t->add_option("--input-size", tr.input_size);
  t->add_option("--stages", tr.stages, "Backbone channels, comma separated");
  t->add_option("--head-width", tr.head_width);
  t->add_option("--dropout", tr.dropout);
  t->add_option("--weight-decay", tr.weight_decay);
  t->add_flag("--batch-norm", tr.batch_norm);
  t->add_option("--rings-max", tr.rings_max);

  EvalOptions ev;
  CLI::App* e = app.add_subcommand("eval", "Score detections against ground truth");
  e->fallthrough();
  e->add_option("--data", ev.data, "Ground-truth dataset directory")->required();
  e->add_option("--split", ev.split, "train, val, test or all");
  e->add_option("--pred-dir", ev.pred_dir, "Detections written by infer");
  e->add_option("--checkpoint", ev.checkpoint, "Run inference with this checkpoint instead");
  e->add_option("--threshold", ev.threshold);
  e->add_option("--sigma", ev.sigma, "Annotator ring-count spread for the baseline");
  e->add_option("--out", ev.out);

  InferOptions in;
  CLI::App* i = app.add_subcommand("infer", "Detect antinodes in frames");
  i->fallthrough();
  i->add_option("--checkpoint", in.checkpoint)->required();
  i->add_option("--data", in.data, "Dataset directory (truth drawn on overlays)");
  i->add_option("--split", in.split, "train, val, test or all");
  i->add_option("--images", in.images, "Directory of PNG frames");
  i->add_option("--threshold", in.threshold);
  i->add_flag("--raw", in.raw, "Keep predicted axes as output (b may exceed a)");
  i->add_flag("--overlay", in.overlay, "Also write annotated PNG overlays");
  i->add_option("--out", in.out);

  AnalyzeOptions an;
  CLI::App* a = app.add_subcommand("analyze", "Ring-count time series and shape statistics");
  a->fallthrough();
  a->add_option("--pred-dir", an.pred_dir, "Detections written by infer")->required();
  a->add_option("--frame-rate", an.frame_rate, "Video frame rate, Hz")->required();
  a->add_option("--region", an.regions, "label:ellipse:cx,cy,a,b,theta[:hz] or label:rect:x0,y0,x1,y1[:hz]");
  a->add_option("--out", an.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(app, gen, out);
    if (t->parsed()) return cmd_train(app, tr, out, err);
    if (e->parsed()) return cmd_eval(app, ev, out);
    if (i->parsed()) return cmd_infer(app, in, out);
    if (a->parsed()) return cmd_analyze(app, an, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace spnet
