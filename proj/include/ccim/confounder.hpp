#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ccim/core.hpp"

namespace ccim::confounder {

// Subject-masked copy of a source image: cells inside the subject box are
// exactly zero, everything else is bit-identical to the source.
struct ContextImage {
  core::Grid grid;
  std::string provenance;
};

ContextImage mask_subject(const core::Grid& image, const core::BoundingBox& box,
                          const std::string& provenance = "");

// Deterministic feature extractor: same input, identical output vector.
class ContextEncoder {
public:
  virtual ~ContextEncoder() = default;
  virtual std::vector<float> encode(const ContextImage& ctx) const = 0;
  virtual const std::string& name() const = 0;
  virtual uint64_t dim() const = 0;
};

// Desk-scale default: seeded random linear projection of the flattened grid
// followed by elementwise tanh. The projection matrix is a pure function of
// (seed, output dim, input length), so outputs are reproducible across runs.
class RandomProjectionEncoder : public ContextEncoder {
public:
  RandomProjectionEncoder(uint64_t dim, uint64_t seed);
  std::vector<float> encode(const ContextImage& ctx) const override;
  const std::string& name() const override { return name_; }
  uint64_t dim() const override { return dim_; }

private:
  uint64_t dim_;
  uint64_t seed_;
  std::string name_;
};

// Passes a synthetic context block through unchanged; used when manifests carry
// one-hot context records instead of images.
class OneHotContextEncoder : public ContextEncoder {
public:
  explicit OneHotContextEncoder(uint64_t dim);
  std::vector<float> encode(const ContextImage& ctx) const override;
  const std::string& name() const override { return name_; }
  uint64_t dim() const override { return dim_; }

private:
  uint64_t dim_;
  std::string name_;
};

core::FeatureSet extract_context_features(const std::vector<ContextImage>& contexts,
                                          const ContextEncoder& enc);

struct ClusterResult {
  std::vector<size_t> assignments;                // per row, cluster index
  std::vector<std::vector<double>> centroids;     // n x dim
};

// Lloyd iterations with k-means++ seeding. Euclidean distance, nearest-centroid
// ties to the lowest index, empty clusters reseeded to the point farthest from
// its current centroid, stop on unchanged assignments or after 300 rounds.
ClusterResult kmeans_pp(const core::FeatureSet& features, size_t n, uint64_t seed);

// PAM-style alternative clusterer; same seeding, determinism, and tie rules.
ClusterResult kmedoids(const core::FeatureSet& features, size_t n, uint64_t seed);

enum class ClusterAlgo { kmeans_pp, kmedoids };

// Stratified confounder: context prototypes with empirical priors.
struct ConfounderDictionary {
  uint64_t n = 0;    // prototype count
  uint64_t dim = 0;  // prototype width
  std::vector<double> prototypes;      // n * dim, row-major
  std::vector<double> priors;          // member_counts[i] / total
  std::vector<uint64_t> member_counts; // each >= 1
  uint64_t total = 0;
  std::string encoder_name;
  uint64_t seed = 0;

  const double* prototype(size_t i) const { return prototypes.data() + i * dim; }
  void validate() const;
};

// Prototypes are the member means of each cluster; priors are member shares.
ConfounderDictionary build_dictionary(const core::FeatureSet& features, size_t n,
                                      uint64_t seed, const std::string& encoder_name,
                                      ClusterAlgo algo = ClusterAlgo::kmeans_pp);

// Ablation baseline: i.i.d. standard-normal prototypes with uniform priors.
ConfounderDictionary random_dictionary(size_t n, size_t dim, uint64_t seed);

// Binary layout: magic "CCIMDIC1"; n, dim as u64 LE; prototypes, priors as
// float64; member_counts as u64; total; length-prefixed encoder name; seed.
void write_dictionary(const ConfounderDictionary& dict, const std::string& path);
ConfounderDictionary read_dictionary(const std::string& path);

}  // namespace ccim::confounder
