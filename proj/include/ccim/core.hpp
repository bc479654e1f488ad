#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ccim/error.hpp"

namespace ccim::core {

// Integer pixel box, half-open on the high side: [x0,x1) x [y0,y1).
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  void validate() const {
    if (!(0 <= x0 && x0 < x1 && 0 <= y0 && y0 < y1))
      throw validation_error("bounding box must satisfy 0 <= x0 < x1 and 0 <= y0 < y1");
  }
  void validate_within(int rows, int cols) const {
    validate();
    if (x1 > cols || y1 > rows)
      throw validation_error("bounding box exceeds image bounds");
  }
};

// Single-channel grid of real-valued cells, row-major. Stands in for an image.
struct Grid {
  int rows = 0, cols = 0;
  std::vector<float> cells;  // rows * cols, row-major

  float at(int r, int c) const { return cells[static_cast<size_t>(r) * cols + c]; }
  float& at(int r, int c) { return cells[static_cast<size_t>(r) * cols + c]; }

  bool operator==(const Grid&) const = default;
};

struct MultiLabel {
  std::vector<bool> bits;  // length = number of categories
  bool operator==(const MultiLabel&) const = default;
};
struct SingleLabel {
  int index = 0;
  int num_classes = 0;
  bool operator==(const SingleLabel&) const = default;
};
// Valence/arousal/dominance triple, each in [1, 10].
struct VadLabel {
  double valence = 1, arousal = 1, dominance = 1;
  bool operator==(const VadLabel&) const = default;
};

struct LabelSet {
  std::variant<MultiLabel, SingleLabel, VadLabel> value;

  bool is_multi() const { return std::holds_alternative<MultiLabel>(value); }
  bool is_single() const { return std::holds_alternative<SingleLabel>(value); }
  bool is_vad() const { return std::holds_alternative<VadLabel>(value); }
  void validate() const;
  bool operator==(const LabelSet&) const = default;
};

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Symbolic synthetic record: categorical subject and context states plus their
// cardinalities, expanded to one-hot blocks by consumers.
struct SyntheticRecord {
  int s = 0, c = 0;
  int n_s = 0, n_c = 0;
  bool operator==(const SyntheticRecord&) const = default;
};

struct Sample {
  std::string sample_id;
  std::optional<Grid> image;
  std::optional<SyntheticRecord> synthetic;
  std::optional<BoundingBox> subject_box;
  LabelSet labels;
  Split split = Split::train;
};

// Ordered collection of fixed-width float vectors with row ids.
struct FeatureSet {
  uint64_t dim = 0;
  std::vector<std::vector<float>> rows;
  std::vector<std::string> row_ids;

  void validate() const;
  bool operator==(const FeatureSet&) const = default;
};

std::vector<Sample> load_manifest(const std::string& path);
void save_manifest(const std::vector<Sample>& samples, const std::string& path);

// Binary layout: magic "CCIMFEA1", dim and row count as u64 LE, row-major
// float32 payload, then newline-separated row ids. Round-trips bit-exactly.
void write_feature_set(const FeatureSet& fs, const std::string& path);
FeatureSet read_feature_set(const std::string& path);

}  // namespace ccim::core
