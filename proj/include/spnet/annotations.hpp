#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spnet/geometry.hpp"

namespace spnet {

inline constexpr double kDefaultRingsMax = 11.0;

/// One labelled antinode. Ring counts are real-valued: aggregated labels
/// carry decimals and are only rounded when scoring.
struct Annotation {
  Ellipse ellipse;
  double rings = 0.0;
  bool exists = true;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// A decoded model prediction.
struct Detection {
  Ellipse ellipse;
  double rings = 0.0;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class Split { train, val, test };

std::string_view to_string(Split s);
/// Throws ConfigError for anything but "train", "val" or "test".
Split parse_split(std::string_view text);

struct FrameRecord {
  std::string image_path;  // relative to the manifest directory
  int frame_index = 0;
  std::vector<Annotation> annotations;
  Split split = Split::train;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// On disk a manifest is a directory holding
///   manifest.csv          frame_index,image_path,annotation_path,split
///   dataset.ini           name / image_width / image_height
///   annotations/*.csv     one frame CSV per record
/// The split lives on each record because the manifest has one split column
/// per row; a manifest loaded with a split filter holds a single split.
struct DatasetManifest {
  std::string name;
  std::vector<FrameRecord> records;
  int image_width = 0;
  int image_height = 0;

  DatasetManifest subset(Split split) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Relative path of the annotation CSV written for a frame index.
std::string annotation_filename(int frame_index);

/// Frame CSV `cx,cy,a,b,theta_deg,rings`, 6-decimal fixed, LF endings.
void write_frame_csv(const std::filesystem::path& file, const std::vector<Annotation>& annotations);
std::vector<Annotation> read_frame_csv(const std::filesystem::path& file);

/// Detection CSV: the frame CSV columns plus a trailing `confidence` column.
void write_detection_csv(const std::filesystem::path& file, const std::vector<Detection>& dets);
/// Accepts detection CSVs and plain frame CSVs (confidence then defaults to 1).
std::vector<Detection> read_detection_csv(const std::filesystem::path& file);

/// Writes the manifest directory. Output bytes are a pure function of the input.
void write_annotations(const DatasetManifest& manifest, const std::filesystem::path& dir);

/// Reads a manifest directory. A split filter keeps only that split's rows.
/// Throws IoError for missing files and ParseError (with line) for bad rows.
DatasetManifest read_annotations(const std::filesystem::path& dir,
                                 std::optional<Split> only = std::nullopt);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplits {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;
};

/// Seeded random partition; each part keeps the input's record order.
/// Throws ConfigError when fractions are negative or do not sum to 1.
DatasetSplits split_dataset(const DatasetManifest& manifest, const SplitFractions& fractions,
                            std::uint64_t seed);

/// Concatenates the three parts back into a single manifest ordered by frame index.
DatasetManifest merge_splits(const DatasetSplits& splits);

/// Formats a double with 6 fixed decimals, never emitting "-0.000000".
std::string format_fixed6(double v);

}  // namespace spnet
