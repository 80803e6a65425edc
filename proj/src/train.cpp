#include "spnet/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "spnet/eval.hpp"

namespace spnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- schedule

OneCycleSchedule::OneCycleSchedule(double max_lr, long total_steps, double pct_start, double div,
                                   double final_div)
    : max_(max_lr), start_(max_lr / div), end_(max_lr / final_div), total_(total_steps) {
  if (!(max_lr >= 0.0)) throw ConfigError("max_lr must be >= 0");
  if (total_steps < 1) throw ConfigError("schedule needs at least one step");
  if (pct_start < 0.0 || pct_start > 1.0) throw ConfigError("pct_start must be in [0, 1]");
  peak_ = std::lround(pct_start * static_cast<double>(total_ - 1));
}

double OneCycleSchedule::at(long step) const {
  step = std::clamp(step, 0L, total_ - 1);
  const double pi = std::numbers::pi;
  if (step < peak_) {
    const double frac = static_cast<double>(step) / static_cast<double>(peak_);
    return start_ + (max_ - start_) * 0.5 * (1.0 - std::cos(pi * frac));
  }
  const long span = total_ - 1 - peak_;
  if (span <= 0) return step == 0 && peak_ == 0 && total_ == 1 ? start_ : max_;
  const double frac = static_cast<double>(step - peak_) / static_cast<double>(span);
  return end_ + (max_ - end_) * 0.5 * (1.0 + std::cos(pi * frac));
}

// ---------------------------------------------------------------- optimizer

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

void AdamW::step(const std::vector<Parameter*>& params, double lr) {
  std::size_t total = 0;
  for (const Parameter* p : params) total += p->value.size();
  if (m_.size() != total) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i, ++k) {
      const double g = p->grad[i];
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g * g;
      const double mhat = m_[k] / bc1;
      const double vhat = v_[k] / bc2;
      double update = mhat / (std::sqrt(vhat) + eps_);
      if (p->decay) update += wd_ * p->value[i];
      p->value[i] -= lr * update;
    }
  }
}

std::vector<double> AdamW::state() const {
  std::vector<double> out = m_;
  out.insert(out.end(), v_.begin(), v_.end());
  return out;
}

void AdamW::set_state(long steps, std::span<const double> moments, std::size_t n_params) {
  t_ = steps;
  if (moments.empty()) {
    m_.clear();
    v_.clear();
    return;
  }
  if (moments.size() != 2 * n_params) throw ShapeError("optimizer state size mismatch");
  m_.assign(moments.begin(), moments.begin() + static_cast<std::ptrdiff_t>(n_params));
  v_.assign(moments.begin() + static_cast<std::ptrdiff_t>(n_params), moments.end());
}

// ---------------------------------------------------------------- data

std::vector<TrainSample> make_samples(const std::vector<Scene>& scenes, const ModelConfig& model) {
  std::vector<TrainSample> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes) {
    const GridSpec spec = model.grid(s.image.width, s.image.height);
    out.push_back({s.image, s.annotations, encode(s.annotations, spec)});
  }
  return out;
}

std::vector<Scene> stage1_expand(const std::vector<Scene>& scenes, const AugmentConfig& cfg,
                                 const ModelConfig& model) {
  constexpr int kRedraws = 8;
  std::vector<Scene> out;
  out.reserve(scenes.size() * static_cast<std::size_t>(std::max(1, cfg.stage1_copies)));
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    out.push_back(scenes[i]);
    for (int copy = 1; copy < cfg.stage1_copies; ++copy) {
      Rng rng = augment_rng(cfg, i, static_cast<std::uint64_t>(copy));
      Scene chosen = scenes[i];
      for (int attempt = 0; attempt < kRedraws; ++attempt) {
        Scene candidate = stage1_apply(scenes[i], cfg, rng);
        quantize(candidate.image);
        try {
          encode(candidate.annotations,
                 model.grid(candidate.image.width, candidate.image.height));
        } catch (const CellOverflow&) {
          continue;
        }
        chosen = std::move(candidate);
        break;
      }
      out.push_back(std::move(chosen));
    }
  }
  return out;
}

// ---------------------------------------------------------------- history

std::string history_csv_header() { return "epoch,train_loss,val_loss,val_ring_acc,val_map,lr"; }

std::string history_csv_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e,%.6f,%.6f,%.9e", r.epoch, r.train_loss, r.val_loss,
                r.val_ring_acc, r.val_map, r.lr);
  return buf;
}

// ---------------------------------------------------------------- checkpoints

Checkpoint make_checkpoint(Detector& model, const AdamW* opt, int epoch) {
  Checkpoint c;
  c.model = model.config();
  c.epoch = epoch;
  c.parameters = model.flat_parameters();
  c.buffers = model.flat_buffers();
  if (opt) {
    c.adam_steps = opt->steps();
    c.adam_state = opt->state();
  }
  return c;
}

Detector restore_model(const Checkpoint& ckpt) {
  Detector d(ckpt.model);
  d.set_flat_parameters(ckpt.parameters);
  d.set_flat_buffers(ckpt.buffers);
  return d;
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated checkpoint: " + file);
  return v;
}

void put_array(std::ostream& out, const std::vector<double>& a) {
  put<std::uint64_t>(out, a.size());
  out.write(reinterpret_cast<const char*>(a.data()),
            static_cast<std::streamsize>(a.size() * sizeof(double)));
}

std::vector<double> get_array(std::istream& in, const std::string& file) {
  const auto n = get<std::uint64_t>(in, file);
  if (n > (1ULL << 32)) throw IoError("corrupt checkpoint array length: " + file);
  std::vector<double> a(n);
  in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint: " + file);
  return a;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& file) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    const std::string text = ckpt.model.to_text();
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.epoch));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.adam_steps));
    put_array(out, ckpt.parameters);
    put_array(out, ckpt.buffers);
    put_array(out, ckpt.adam_state);
    if (!out) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + file.string());
}

Checkpoint load_checkpoint(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  const std::string name = file.string();
  if (!in) throw IoError("cannot open checkpoint: " + name);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IoError("not a checkpoint file: " + name);
  }
  if (get<std::uint32_t>(in, name) != kVersion) throw IoError("unsupported checkpoint version");
  const auto len = get<std::uint32_t>(in, name);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw IoError("truncated checkpoint: " + name);
  Checkpoint c;
  c.model = ModelConfig::from_text(text);
  c.epoch = static_cast<int>(get<std::uint64_t>(in, name));
  c.adam_steps = static_cast<long>(get<std::uint64_t>(in, name));
  c.parameters = get_array(in, name);
  c.buffers = get_array(in, name);
  c.adam_state = get_array(in, name);
  return c;
}

// ---------------------------------------------------------------- training

namespace {

struct Evaluation {
  double loss = 0.0;
  double ring_acc = 0.0;
  double map = 0.0;
};

Evaluation evaluate_set(Detector& model, const std::vector<TrainSample>& set,
                        const TrainConfig& cfg) {
  Evaluation ev;
  if (set.empty()) return ev;
  std::vector<Image> images;
  images.reserve(set.size());
  for (const auto& s : set) images.push_back(s.image);
  const auto outputs = predict(model, images);
  std::vector<double> losses;
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Annotation>> truths;
  for (std::size_t i = 0; i < set.size(); ++i) {
    losses.push_back(total_loss(set[i].target.values, outputs[i], cfg.loss));
    const GridSpec spec = model.config().grid(set[i].image.width, set[i].image.height);
    dets.push_back(decode(std::span<const double>(outputs[i]), spec, cfg.threshold));
    truths.push_back(set[i].annotations);
  }
  ev.loss = pairwise_sum(losses) / static_cast<double>(losses.size());
  std::size_t n_truths = 0;
  for (const auto& t : truths) n_truths += t.size();
  if (n_truths > 0) {
    const EvalReport r = evaluate(dets, truths);
    ev.ring_acc = r.ring_accuracy;
    ev.map = r.map;
  }
  return ev;
}

}  // namespace

TrainResult train(Detector& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                  const AugmentConfig& aug, const Checkpoint* resume,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(cfg.max_lr >= 0.0)) throw ConfigError("max_lr must be >= 0");
  const ModelConfig& mc = model.config();
  const auto n = static_cast<long>(train_set.size());
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const OneCycleSchedule schedule(cfg.max_lr, std::max(1L, cfg.epochs * steps_per_epoch),
                                  cfg.pct_start, cfg.div_factor, cfg.final_div);
  AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps, mc.weight_decay);

  int first_epoch = 1;
  if (resume) {
    model.set_flat_parameters(resume->parameters);
    model.set_flat_buffers(resume->buffers);
    opt.set_state(resume->adam_steps, resume->adam_state, model.num_parameters());
    first_epoch = resume->epoch + 1;
  }

  TrainResult result;
  result.last = make_checkpoint(model, &opt, first_epoch - 1);
  result.best = result.last;
  double best_score = std::numeric_limits<double>::infinity();
  const auto params = model.parameters();
  const std::size_t out_size = static_cast<std::size_t>(mc.output_size());

  for (int epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
    const Checkpoint last_good = make_checkpoint(model, &opt, epoch - 1);
    model.reseed_dropout(derive_seed(cfg.seed, 0xd0, static_cast<std::uint64_t>(epoch)));

    std::vector<Image> images;
    images.reserve(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      if (cfg.stage2) {
        Rng rng = augment_rng(aug, i, static_cast<std::uint64_t>(epoch));
        images.push_back(stage2_apply(train_set[i].image, aug, rng));
      } else {
        images.push_back(train_set[i].image);
      }
    }

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, 0x5f, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.next_u64() % i)]);
    }

    std::vector<double> sample_losses;
    LossTerms terms;
    double lr = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      const long begin = b * cfg.batch_size;
      const long end = std::min(n, begin + cfg.batch_size);
      std::vector<Image> batch;
      for (long k = begin; k < end; ++k) batch.push_back(images[order[static_cast<std::size_t>(k)]]);
      const Tensor input = prepare_input(batch, mc.input_size);
      const Tensor output = model.forward(input, true);
      Tensor grad(output.n, output.c, 1, 1);
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (int i = 0; i < output.n; ++i) {
        const TrainSample& s = train_set[order[static_cast<std::size_t>(begin + i)]];
        const std::span<const double> pred(output.sample(i), out_size);
        const LossTerms t = total_loss_terms(s.target.values, pred, cfg.loss);
        if (!std::isfinite(t.total())) throw TrainingDiverged(epoch, last_good);
        sample_losses.push_back(t.total());
        terms += t;
        const std::vector<double> g = loss_gradient(s.target.values, pred, cfg.loss);
        for (std::size_t k = 0; k < out_size; ++k) grad.sample(i)[k] = g[k] * inv_b;
      }
      model.zero_grad();
      model.backward(grad);
      lr = schedule.at((epoch - 1) * steps_per_epoch + b);
      opt.step(params, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = pairwise_sum(sample_losses) / static_cast<double>(sample_losses.size());
    rec.train_terms = terms.scaled(1.0 / static_cast<double>(sample_losses.size()));
    rec.lr = lr;
    const bool eval_now = !val_set.empty() && (cfg.eval_every <= 1 || epoch % cfg.eval_every == 0 ||
                                               epoch == cfg.epochs);
    if (eval_now) {
      const Evaluation ev = evaluate_set(model, val_set, cfg);
      rec.val_loss = ev.loss;
      rec.val_ring_acc = ev.ring_acc;
      rec.val_map = ev.map;
    }
    if (!std::isfinite(rec.train_loss)) throw TrainingDiverged(epoch, last_good);
    result.history.push_back(rec);
    result.last = make_checkpoint(model, &opt, epoch);
    const double score = val_set.empty() ? rec.train_loss : rec.val_loss;
    if ((val_set.empty() || eval_now) && score < best_score) {
      best_score = score;
      result.best = result.last;
    }
    if (on_epoch) on_epoch(rec, result.last);
  }
  return result;
}

std::vector<std::vector<double>> predict(Detector& model, std::span<const Image> images,
                                         int batch_size) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  const auto out_size = static_cast<std::size_t>(model.config().output_size());
  for (std::size_t begin = 0; begin < images.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), begin + static_cast<std::size_t>(batch_size));
    const Tensor input = prepare_input(images.subspan(begin, end - begin), model.config().input_size);
    const Tensor output = model.forward(input, false);
    for (int i = 0; i < output.n; ++i) out.emplace_back(output.sample(i), output.sample(i) + out_size);
  }
  return out;
}

std::vector<std::vector<Detection>> infer(Detector& model, std::span<const Image> images,
                                          double threshold, DecodeMode mode) {
  const auto outputs = predict(model, images);
  std::vector<std::vector<Detection>> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const GridSpec spec = model.config().grid(images[i].width, images[i].height);
    out.push_back(decode(std::span<const double>(outputs[i]), spec, threshold, mode));
  }
  return out;
}

}  // namespace spnet
