#include "spnet/analysis.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace spnet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxIterations = 200;
constexpr double kRelTol = 1e-8;
constexpr int kPhaseGrid = 72;

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Frequency (Hz) of the strongest non-DC peak of the power spectrum, refined
// by parabolic interpolation on the log power; 0 if the spectrum is flat.
double dominant_frequency(const std::vector<double>& y, double fs) {
  const std::size_t m = next_pow2(16 * y.size());
  double* in = fftw_alloc_real(m);
  fftw_complex* out = fftw_alloc_complex(m / 2 + 1);
  std::fill(in, in + m, 0.0);
  std::copy(y.begin(), y.end(), in);
  {
    std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
        fftw_plan_dft_r2c_1d(static_cast<int>(m), in, out, FFTW_ESTIMATE));
    fftw_execute(plan.get());
  }
  std::vector<double> power(m / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }
  fftw_free(in);
  fftw_free(out);

  // Skip the DC lobe: start after the first local minimum.
  std::size_t start = 1;
  while (start + 1 < power.size() && power[start + 1] <= power[start]) ++start;
  std::size_t best = start;
  for (std::size_t k = start; k < power.size(); ++k) {
    if (power[k] > power[best]) best = k;
  }
  if (best == 0 || power[best] <= 0.0) return 0.0;
  double offset = 0.0;
  if (best > 0 && best + 1 < power.size() && power[best - 1] > 0.0 && power[best + 1] > 0.0) {
    const double l = std::log(power[best - 1]);
    const double c = std::log(power[best]);
    const double r = std::log(power[best + 1]);
    const double denom = l - 2.0 * c + r;
    if (denom < 0.0) offset = 0.5 * (l - r) / denom;
  }
  return (static_cast<double>(best) + offset) * fs / static_cast<double>(m);
}

struct Model3 {
  double amplitude, omega, phase;
};

double sum_sq(const std::vector<double>& t, const std::vector<double>& r, const Model3& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = std::abs(p.amplitude * std::cos(p.omega * t[i] + p.phase)) - r[i];
    s += e * e;
  }
  return s;
}

}  // namespace

bool NoteRegion::contains(double x, double y) const {
  if (ellipse_roi) return spnet::contains(*ellipse_roi, x, y);
  if (rect_roi) return x >= rect_roi->x0 && x <= rect_roi->x1 && y >= rect_roi->y0 && y <= rect_roi->y1;
  return false;
}

RingSeries assemble_series(const std::vector<std::vector<Detection>>& frames,
                           const NoteRegion& region, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ConfigError("frame rate must be positive");
  RingSeries s;
  s.source = region.label;
  bool any = false;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Detection* best = nullptr;
    for (const Detection& d : frames[f]) {
      if (!region.contains(d.ellipse.cx, d.ellipse.cy)) continue;
      if (!best || d.confidence > best->confidence) best = &d;
    }
    any = any || best != nullptr;
    s.times.push_back(static_cast<double>(f) / frame_rate);
    s.rings.push_back(best ? best->rings : 0.0);
  }
  if (!any) throw EmptySeries("no detections inside region '" + region.label + "'");
  return s;
}

FitResult fit_abs_cos(const RingSeries& series) {
  const std::size_t n = series.rings.size();
  if (n < 4 || series.times.size() != n) throw NoOscillation("series too short to fit");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(series.times[i] > series.times[i - 1])) {
      throw ConfigError("series times must be strictly increasing");
    }
  }
  const double t0 = series.times.front();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = series.times[i] - t0;
  const std::vector<double>& r = series.rings;
  const double duration = t.back();
  const double fs = static_cast<double>(n - 1) / duration;

  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  if (*hi - *lo <= 1e-12 * std::max(1.0, std::abs(*hi))) {
    throw NoOscillation("series is flat");
  }

  // |cos| has period 1/(2f), so r² carries its strongest line at 2f.
  std::vector<double> power(n);
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_sq += r[i] * r[i];
  mean_sq /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) power[i] = r[i] * r[i] - mean_sq;
  const double f0 = 0.5 * dominant_frequency(power, fs);
  if (!(f0 > 0.0)) throw NoOscillation("no spectral peak");
  if (duration * f0 < 4.0) throw NoOscillation("series shorter than four periods of the guess");

  Model3 p{0.0, 2.0 * kPi * f0, 0.0};
  double best_cost = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kPhaseGrid; ++k) {
    const double phase = kPi * k / kPhaseGrid;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::abs(std::cos(p.omega * t[i] + phase));
      num += r[i] * c;
      den += c * c;
    }
    const Model3 trial{den > 0.0 ? num / den : 0.0, p.omega, phase};
    const double cost = sum_sq(t, r, trial);
    if (cost < best_cost) {
      best_cost = cost;
      p = trial;
    }
  }

  double lambda = 1e-3;
  double cost = best_cost;
  bool converged = false;
  int iter = 0;
  for (; iter < kMaxIterations && !converged; ++iter) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double arg = p.omega * t[i] + p.phase;
      const double c = std::cos(arg);
      const double s = std::sin(arg);
      const double sign = (p.amplitude * c) >= 0.0 ? 1.0 : -1.0;
      const Eigen::Vector3d j(sign * c, -sign * p.amplitude * s * t[i], -sign * p.amplitude * s);
      const double e = std::abs(p.amplitude * c) - r[i];
      jtj += j * j.transpose();
      jtr += j * e;
    }
    bool improved = false;
    while (!improved && lambda < 1e12) {
      Eigen::Matrix3d a = jtj;
      for (int d = 0; d < 3; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-30);
      const Eigen::Vector3d step = a.ldlt().solve(-jtr);
      const Model3 trial{p.amplitude + step[0], p.omega + step[1], p.phase + step[2]};
      const double trial_cost = sum_sq(t, r, trial);
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double rel = std::max({std::abs(step[0]) / (std::abs(p.amplitude) + 1e-300),
                                     std::abs(step[1]) / (std::abs(p.omega) + 1e-300),
                                     std::abs(step[2]) / (std::abs(p.phase) + 1.0)});
        p = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        converged = rel < kRelTol;
      } else {
        lambda *= 10.0;
      }
    }
    // No downhill step at any damping: already at a minimum.
    if (!improved) converged = true;
  }

  FitResult fit;
  fit.amplitude = std::abs(p.amplitude);
  double omega = p.omega;
  double phase = p.phase;
  if (omega < 0.0) {
    omega = -omega;
    phase = -phase;
  }
  phase -= omega * t0;
  phase = std::fmod(phase, kPi);
  if (phase < 0.0) phase += kPi;
  fit.freq_hz = omega / (2.0 * kPi);
  fit.phase = phase;
  fit.residual_rms = std::sqrt(cost / static_cast<double>(n));
  fit.iterations = iter;
  if (!converged || !std::isfinite(cost) || !(fit.freq_hz > 0.0)) {
    throw FitDiverged("|A cos| fit did not converge in " + std::to_string(kMaxIterations) +
                          " iterations",
                      fit);
  }
  return fit;
}

std::vector<AreaRow> export_area_vs_rings(const std::vector<std::vector<Detection>>& frames,
                                          const std::vector<int>& frame_indices) {
  std::vector<AreaRow> rows;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const int index = f < frame_indices.size() ? frame_indices[f] : static_cast<int>(f);
    for (const Detection& d : frames[f]) rows.push_back({index, area(d.ellipse), d.rings});
  }
  return rows;
}

std::vector<Ecc2Row> export_ecc2_vs_rings(const std::vector<std::vector<Detection>>& frames,
                                          const std::vector<int>& frame_indices,
                                          std::size_t* skipped) {
  std::vector<Ecc2Row> rows;
  std::size_t skip = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const int index = f < frame_indices.size() ? frame_indices[f] : static_cast<int>(f);
    for (const Detection& d : frames[f]) {
      if (d.ellipse.a == 0.0) {
        ++skip;
        continue;
      }
      rows.push_back({index, ecc_squared(d.ellipse.a, d.ellipse.b), d.rings});
    }
  }
  if (skipped) *skipped = skip;
  return rows;
}

std::string area_csv(const std::vector<AreaRow>& rows) {
  std::ostringstream out;
  out << "frame,area_px2,rings\n";
  for (const auto& r : rows) {
    out << r.frame << ',' << format_fixed6(r.area_px2) << ',' << format_fixed6(r.rings) << '\n';
  }
  return out.str();
}

std::string ecc2_csv(const std::vector<Ecc2Row>& rows) {
  std::ostringstream out;
  out << "frame,ecc2,rings\n";
  for (const auto& r : rows) {
    out << r.frame << ',' << format_fixed6(r.ecc2) << ',' << format_fixed6(r.rings) << '\n';
  }
  return out.str();
}

std::string fit_csv_header() { return "note,A,f_hz,phase_rad,residual_rms"; }

std::string fit_csv_row(const std::string& note, const FitResult& fit) {
  return note + ',' + format_fixed6(fit.amplitude) + ',' + format_fixed6(fit.freq_hz) + ',' +
         format_fixed6(fit.phase) + ',' + format_fixed6(fit.residual_rms);
}

NoteRegion parse_region(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ':')) parts.push_back(item);
  if (parts.size() < 3 || parts.size() > 4 || parts[0].empty()) {
    throw ConfigError("region must look like label:ellipse:cx,cy,a,b,theta or label:rect:x0,y0,x1,y1");
  }
  std::vector<double> v;
  std::stringstream nums(parts[2]);
  while (std::getline(nums, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad number in region '" + text + "'");
    }
  }
  NoteRegion region;
  region.label = parts[0];
  if (parts[1] == "ellipse" && v.size() == 5) {
    region.ellipse_roi = Ellipse{v[0], v[1], v[2], v[3], v[4]};
    if (!(v[2] > 0.0) || !(v[3] > 0.0)) throw ConfigError("region ellipse axes must be positive");
  } else if (parts[1] == "rect" && v.size() == 4) {
    region.rect_roi = Rect{std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]),
                           std::max(v[1], v[3])};
  } else {
    throw ConfigError("unknown region shape or wrong coordinate count in '" + text + "'");
  }
  if (parts.size() == 4) {
    try {
      region.expected_freq = std::stod(parts[3]);
    } catch (const std::exception&) {
      throw ConfigError("bad expected frequency in '" + text + "'");
    }
  }
  return region;
}

}  // namespace spnet
