#include "spnet/annotations.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "spnet/errors.hpp"
#include "spnet/rng.hpp"

namespace spnet {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFrameHeader = "cx,cy,a,b,theta_deg,rings";
constexpr std::string_view kDetectionHeader = "cx,cy,a,b,theta_deg,rings,confidence";
constexpr std::string_view kManifestHeader = "frame_index,image_path,annotation_path,split";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

double parse_number(const std::string& file, std::size_t line_no, const std::string& field) {
  const char* begin = field.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw ParseError(file, line_no, "not a finite number: '" + field + "'");
  }
  return v;
}

int parse_int(const std::string& file, std::size_t line_no, const std::string& field) {
  const double v = parse_number(file, line_no, field);
  if (v != std::floor(v) || v < 0 || v > 2147483647.0) {
    throw ParseError(file, line_no, "not a nonnegative integer: '" + field + "'");
  }
  return static_cast<int>(v);
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  return out;
}

std::ifstream open_in(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  return in;
}

void write_row(std::ostream& out, const Ellipse& e, double rings) {
  out << format_fixed6(e.cx) << ',' << format_fixed6(e.cy) << ',' << format_fixed6(e.a) << ','
      << format_fixed6(e.b) << ',' << format_fixed6(e.theta) << ',' << format_fixed6(rings);
}

// Parses the frame/detection body; `with_confidence` is decided by the header.
std::vector<Detection> read_rows(const fs::path& file) {
  std::ifstream in = open_in(file);
  const std::string name = file.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name, 1, "missing header");
  line = strip_cr(line);
  bool with_confidence = false;
  if (line == kDetectionHeader) {
    with_confidence = true;
  } else if (line != kFrameHeader) {
    throw ParseError(name, 1, "unexpected header '" + line + "'");
  }
  const std::size_t expected = with_confidence ? 7 : 6;
  std::vector<Detection> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != expected) {
      throw ParseError(name, line_no,
                       "expected " + std::to_string(expected) + " fields, got " +
                           std::to_string(fields.size()));
    }
    Detection d;
    d.ellipse.cx = parse_number(name, line_no, fields[0]);
    d.ellipse.cy = parse_number(name, line_no, fields[1]);
    d.ellipse.a = parse_number(name, line_no, fields[2]);
    d.ellipse.b = parse_number(name, line_no, fields[3]);
    d.ellipse.theta = parse_number(name, line_no, fields[4]);
    d.rings = parse_number(name, line_no, fields[5]);
    d.confidence = with_confidence ? parse_number(name, line_no, fields[6]) : 1.0;
    if (d.rings < 0.0) throw ParseError(name, line_no, "ring count must be >= 0");
    if (!(d.ellipse.a > 0.0) || !(d.ellipse.b > 0.0)) {
      throw ParseError(name, line_no, "ellipse axes must be positive");
    }
    rows.push_back(d);
  }
  return rows;
}

}  // namespace

std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "'");
}

DatasetManifest DatasetManifest::subset(Split split) const {
  DatasetManifest out{name, {}, image_width, image_height};
  for (const auto& r : records) {
    if (r.split == split) out.records.push_back(r);
  }
  return out;
}

std::string annotation_filename(int frame_index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "annotations/frame_%06d.csv", frame_index);
  return buf;
}

void write_frame_csv(const fs::path& file, const std::vector<Annotation>& annotations) {
  std::ofstream out = open_out(file);
  out << kFrameHeader << '\n';
  for (const auto& a : annotations) {
    write_row(out, a.ellipse, a.rings);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<Annotation> read_frame_csv(const fs::path& file) {
  std::vector<Annotation> out;
  for (const auto& d : read_rows(file)) out.push_back({d.ellipse, d.rings, true});
  return out;
}

void write_detection_csv(const fs::path& file, const std::vector<Detection>& dets) {
  std::ofstream out = open_out(file);
  out << kDetectionHeader << '\n';
  for (const auto& d : dets) {
    write_row(out, d.ellipse, d.rings);
    out << ',' << format_fixed6(d.confidence) << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<Detection> read_detection_csv(const fs::path& file) { return read_rows(file); }

void write_annotations(const DatasetManifest& manifest, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "annotations", ec);
  if (ec) throw IoError("cannot create directory " + (dir / "annotations").string());

  {
    std::ofstream ini = open_out(dir / "dataset.ini");
    ini << "name=" << manifest.name << '\n'
        << "image_width=" << manifest.image_width << '\n'
        << "image_height=" << manifest.image_height << '\n';
  }

  std::ofstream out = open_out(dir / "manifest.csv");
  out << kManifestHeader << '\n';
  std::vector<int> seen;
  for (const auto& r : manifest.records) {
    if (r.frame_index < 0) throw ConfigError("frame_index must be >= 0");
    if (std::find(seen.begin(), seen.end(), r.frame_index) != seen.end()) {
      throw ConfigError("duplicate frame_index " + std::to_string(r.frame_index));
    }
    seen.push_back(r.frame_index);
    const std::string ann = annotation_filename(r.frame_index);
    write_frame_csv(dir / ann, r.annotations);
    out << r.frame_index << ',' << r.image_path << ',' << ann << ',' << to_string(r.split) << '\n';
  }
  if (!out) throw IoError("write failed: " + (dir / "manifest.csv").string());
}

DatasetManifest read_annotations(const fs::path& dir, std::optional<Split> only) {
  DatasetManifest m;
  m.name = dir.filename().string();
  if (m.name.empty()) m.name = dir.parent_path().filename().string();

  if (fs::exists(dir / "dataset.ini")) {
    std::ifstream ini = open_in(dir / "dataset.ini");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ini, line)) {
      ++line_no;
      line = strip_cr(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ParseError((dir / "dataset.ini").string(), line_no, "expected key=value");
      }
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "name") {
        m.name = value;
      } else if (key == "image_width") {
        m.image_width = parse_int((dir / "dataset.ini").string(), line_no, value);
      } else if (key == "image_height") {
        m.image_height = parse_int((dir / "dataset.ini").string(), line_no, value);
      }
    }
  }

  const fs::path manifest_file = dir / "manifest.csv";
  std::ifstream in = open_in(manifest_file);
  const std::string name = manifest_file.string();
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
    throw ParseError(name, 1, "expected header '" + std::string(kManifestHeader) + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw ParseError(name, line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    }
    FrameRecord r;
    r.frame_index = parse_int(name, line_no, fields[0]);
    r.image_path = fields[1];
    try {
      r.split = parse_split(fields[3]);
    } catch (const ConfigError& e) {
      throw ParseError(name, line_no, e.what());
    }
    if (only && r.split != *only) continue;
    r.annotations = read_frame_csv(dir / fields[2]);
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetSplits split_dataset(const DatasetManifest& manifest, const SplitFractions& f,
                            std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 ||
      std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = manifest.records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5911u));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  std::vector<Split> assignment(n, Split::test);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) {
      assignment[order[k]] = Split::train;
    } else if (k < n_train + n_val) {
      assignment[order[k]] = Split::val;
    }
  }

  DatasetSplits out;
  for (DatasetManifest* part : {&out.train, &out.val, &out.test}) {
    part->name = manifest.name;
    part->image_width = manifest.image_width;
    part->image_height = manifest.image_height;
  }
  for (std::size_t i = 0; i < n; ++i) {
    FrameRecord r = manifest.records[i];
    r.split = assignment[i];
    switch (r.split) {
      case Split::train:
        out.train.records.push_back(std::move(r));
        break;
      case Split::val:
        out.val.records.push_back(std::move(r));
        break;
      case Split::test:
        out.test.records.push_back(std::move(r));
        break;
    }
  }
  return out;
}

DatasetManifest merge_splits(const DatasetSplits& s) {
  DatasetManifest m{s.train.name, {}, s.train.image_width, s.train.image_height};
  for (const DatasetManifest* part : {&s.train, &s.val, &s.test}) {
    m.records.insert(m.records.end(), part->records.begin(), part->records.end());
  }
  std::stable_sort(m.records.begin(), m.records.end(),
                   [](const FrameRecord& a, const FrameRecord& b) {
                     return a.frame_index < b.frame_index;
                   });
  return m;
}

}  // namespace spnet
