#include "spnet/model.hpp"

#include <cmath>
#include <sstream>

#include "spnet/errors.hpp"

namespace spnet {

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

// Zero mean, unit variance per image; a constant image maps to all zeros.
void standardize(Tensor& x) {
  const std::size_t per = x.sample_size();
  for (int i = 0; i < x.n; ++i) {
    double* p = x.sample(i);
    double mean = 0.0;
    for (std::size_t k = 0; k < per; ++k) mean += p[k];
    mean /= static_cast<double>(per);
    double var = 0.0;
    for (std::size_t k = 0; k < per; ++k) var += (p[k] - mean) * (p[k] - mean);
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(per) + 1e-8);
    for (std::size_t k = 0; k < per; ++k) p[k] = (p[k] - mean) * inv;
  }
}

}  // namespace

GridSpec ModelConfig::grid(int image_width, int image_height) const {
  GridSpec g;
  g.rows = grid_rows;
  g.cols = grid_cols;
  g.predictors_per_cell = predictors_per_cell;
  g.image_width = image_width;
  g.image_height = image_height;
  g.rings_max = rings_max;
  return g;
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "input_size=" << input_size << '\n'
      << "preblock_channels=" << preblock_channels << '\n'
      << "stage_channels=" << join_ints(stage_channels) << '\n'
      << "kernel=" << kernel << '\n'
      << "head_width=" << head_width << '\n'
      << "dropout_rate=" << dropout_rate << '\n'
      << "weight_decay=" << weight_decay << '\n'
      << "leaky_slope=" << leaky_slope << '\n'
      << "batch_norm=" << (batch_norm ? 1 : 0) << '\n'
      << "grid_rows=" << grid_rows << '\n'
      << "grid_cols=" << grid_cols << '\n'
      << "predictors_per_cell=" << predictors_per_cell << '\n'
      << "rings_max=" << rings_max << '\n'
      << "seed=" << seed << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "input_size") cfg.input_size = std::stoi(value);
      else if (key == "preblock_channels") cfg.preblock_channels = std::stoi(value);
      else if (key == "stage_channels") cfg.stage_channels = parse_ints(value);
      else if (key == "kernel") cfg.kernel = std::stoi(value);
      else if (key == "head_width") cfg.head_width = std::stoi(value);
      else if (key == "dropout_rate") cfg.dropout_rate = std::stod(value);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
      else if (key == "leaky_slope") cfg.leaky_slope = std::stod(value);
      else if (key == "batch_norm") cfg.batch_norm = std::stoi(value) != 0;
      else if (key == "grid_rows") cfg.grid_rows = std::stoi(value);
      else if (key == "grid_cols") cfg.grid_cols = std::stoi(value);
      else if (key == "predictors_per_cell") cfg.predictors_per_cell = std::stoi(value);
      else if (key == "rings_max") cfg.rings_max = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
    } catch (const std::exception&) {
      throw ConfigError("bad model config value for '" + key + "': " + value);
    }
  }
  cfg.validate();
  return cfg;
}

void ModelConfig::validate() const {
  if (input_size <= 0 || kernel <= 0 || kernel % 2 == 0) {
    throw ConfigError("input_size must be positive and kernel odd");
  }
  int size = input_size / 2;
  for (std::size_t i = 0; i < stage_channels.size(); ++i) size /= 2;
  if (size < 1) throw ConfigError("input_size too small for the number of pooling stages");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0, 1)");
  if (grid_rows <= 0 || grid_cols <= 0 || predictors_per_cell <= 0) {
    throw ConfigError("grid dimensions must be positive");
  }
  if (preblock_channels <= 0 || head_width < 0) throw ConfigError("bad layer widths");
  if (!(rings_max > 0.0)) throw ConfigError("rings_max must be positive");
}

Tensor prepare_input(std::span<const Image> images, int input_size) {
  Tensor t(static_cast<int>(images.size()), 1, input_size, input_size);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image resized = resize_area(images[i], input_size, input_size);
    double* dst = t.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < resized.pixels.size(); ++k) dst[k] = resized.pixels[k] / 255.0;
  }
  return t;
}

struct Detector::Layers {
  // Pre-block skip path.
  std::unique_ptr<AvgPool2> skip_pool;
  std::unique_ptr<Tile> skip_tile;
  // Pre-block conv path.
  std::vector<std::unique_ptr<Layer>> upper;
  std::unique_ptr<Dropout> dropout;
  // Backbone and head, applied in order.
  std::vector<std::unique_ptr<Layer>> trunk;
  bool recorded = false;
};

Detector::Detector(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
}

Detector::Detector(const Detector& other) : cfg_(other.cfg_) {
  build();
  Detector& src = const_cast<Detector&>(other);
  set_flat_parameters(src.flat_parameters());
  set_flat_buffers(src.flat_buffers());
}

Detector& Detector::operator=(const Detector& other) {
  if (this != &other) {
    Detector copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Detector::Detector(Detector&&) noexcept = default;
Detector& Detector::operator=(Detector&&) noexcept = default;
Detector::~Detector() = default;

void Detector::build() {
  layers_ = std::make_unique<Layers>();
  Layers& L = *layers_;
  Rng rng(derive_seed(cfg_.seed, 0x1417));
  const double slope = cfg_.leaky_slope;
  const double he_gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const int pc = cfg_.preblock_channels;

  L.skip_pool = std::make_unique<AvgPool2>();
  L.skip_tile = std::make_unique<Tile>(pc);

  auto conv1 = std::make_unique<Conv2d>("pre.conv1", 1, pc, cfg_.kernel);
  auto conv2 = std::make_unique<Conv2d>("pre.conv2", pc, pc, cfg_.kernel);
  auto conv3 = std::make_unique<Conv2d>("pre.conv3", pc, pc, cfg_.kernel);
  conv1->init(rng, he_gain);
  conv2->init(rng, he_gain);
  conv3->init(rng, 1.0);
  L.upper.push_back(std::move(conv1));
  L.upper.push_back(std::make_unique<LeakyReLU>(slope));
  L.upper.push_back(std::make_unique<AvgPool2>());
  L.upper.push_back(std::move(conv2));
  L.upper.push_back(std::make_unique<LeakyReLU>(slope));
  L.upper.push_back(std::move(conv3));
  L.dropout = std::make_unique<Dropout>(cfg_.dropout_rate, derive_seed(cfg_.seed, 0xd40));

  int channels = pc;
  int size = cfg_.input_size / 2;
  for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
    const int out = cfg_.stage_channels[s];
    auto conv = std::make_unique<Conv2d>("stage" + std::to_string(s) + ".conv", channels, out,
                                         cfg_.kernel);
    conv->init(rng, he_gain);
    L.trunk.push_back(std::move(conv));
    if (cfg_.batch_norm) {
      L.trunk.push_back(std::make_unique<BatchNorm2d>("stage" + std::to_string(s) + ".bn", out));
    }
    L.trunk.push_back(std::make_unique<LeakyReLU>(slope));
    L.trunk.push_back(std::make_unique<AvgPool2>());
    channels = out;
    size /= 2;
  }
  int features = channels * size * size;
  if (cfg_.head_width > 0) {
    auto hidden = std::make_unique<Dense>("head.hidden", features, cfg_.head_width);
    hidden->init(rng, he_gain);
    L.trunk.push_back(std::move(hidden));
    L.trunk.push_back(std::make_unique<LeakyReLU>(slope));
    features = cfg_.head_width;
  }
  auto out = std::make_unique<Dense>("head.out", features, cfg_.output_size());
  out->init(rng, 1.0);
  L.trunk.push_back(std::move(out));
  L.trunk.push_back(std::make_unique<StridedSigmoid>(kNumVars, kP));
}

Tensor Detector::forward(const Tensor& input, bool training) {
  if (input.c != 1 || input.h != cfg_.input_size || input.w != cfg_.input_size) {
    throw ShapeError("detector expects n×1×" + std::to_string(cfg_.input_size) + "×" +
                     std::to_string(cfg_.input_size) + " input");
  }
  Layers& L = *layers_;
  Tensor x = input;
  standardize(x);
  Tensor skip = L.skip_tile->forward(L.skip_pool->forward(x, training), training);
  Tensor up = x;
  for (auto& layer : L.upper) up = layer->forward(up, training);
  if (!up.same_shape(skip)) throw ShapeError("pre-block paths disagree in shape");
  for (std::size_t k = 0; k < up.data.size(); ++k) up.data[k] += skip.data[k];
  Tensor h = L.dropout->forward(up, training);
  for (auto& layer : L.trunk) h = layer->forward(h, training);
  L.recorded = true;
  return h;
}

void Detector::backward(const Tensor& grad_output) {
  Layers& L = *layers_;
  if (!L.recorded) throw StaleTape();
  L.recorded = false;
  Tensor g = grad_output;
  for (auto it = L.trunk.rbegin(); it != L.trunk.rend(); ++it) g = (*it)->backward(g);
  g = L.dropout->backward(g);
  // The residual sum sends the same gradient down both paths.
  Tensor gu = g;
  for (auto it = L.upper.rbegin(); it != L.upper.rend(); ++it) gu = (*it)->backward(gu);
  L.skip_pool->backward(L.skip_tile->backward(g));
}

std::vector<Parameter*> Detector::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_->upper) {
    for (Parameter* p : layer->parameters()) out.push_back(p);
  }
  for (auto& layer : layers_->trunk) {
    for (Parameter* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::vector<double>*> Detector::buffers() {
  std::vector<std::vector<double>*> out;
  for (auto& layer : layers_->trunk) {
    for (auto* b : layer->buffers()) out.push_back(b);
  }
  return out;
}

void Detector::zero_grad() {
  for (Parameter* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t Detector::num_parameters() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::vector<double> Detector::flat_parameters() {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (Parameter* p : parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

void Detector::set_flat_parameters(std::span<const double> values) {
  if (values.size() != num_parameters()) {
    throw ShapeError("parameter array has " + std::to_string(values.size()) +
                     " values, model has " + std::to_string(num_parameters()));
  }
  std::size_t offset = 0;
  for (Parameter* p : parameters()) {
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
              values.begin() + static_cast<std::ptrdiff_t>(offset + p->value.size()),
              p->value.begin());
    offset += p->value.size();
  }
}

std::vector<double> Detector::flat_gradients() {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (Parameter* p : parameters()) out.insert(out.end(), p->grad.begin(), p->grad.end());
  return out;
}

std::vector<double> Detector::flat_buffers() {
  std::vector<double> out;
  for (auto* b : buffers()) out.insert(out.end(), b->begin(), b->end());
  return out;
}

void Detector::set_flat_buffers(std::span<const double> values) {
  std::size_t total = 0;
  for (auto* b : buffers()) total += b->size();
  if (values.size() != total) throw ShapeError("buffer array size mismatch");
  std::size_t offset = 0;
  for (auto* b : buffers()) {
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
              values.begin() + static_cast<std::ptrdiff_t>(offset + b->size()), b->begin());
    offset += b->size();
  }
}

void Detector::reseed_dropout(std::uint64_t seed) { layers_->dropout->reseed(seed); }

}  // namespace spnet
