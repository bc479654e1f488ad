#include "ccim/confounder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

namespace ccim::confounder {

ContextImage mask_subject(const core::Grid& image, const core::BoundingBox& box,
                          const std::string& provenance) {
  box.validate_within(image.rows, image.cols);
  ContextImage out;
  out.grid = image;
  out.provenance = provenance;
  for (int r = box.y0; r < box.y1; ++r)
    for (int c = box.x0; c < box.x1; ++c) out.grid.at(r, c) = 0.0f;
  return out;
}

RandomProjectionEncoder::RandomProjectionEncoder(uint64_t dim, uint64_t seed)
    : dim_(dim), seed_(seed),
      name_("random-proj-d" + std::to_string(dim) + "-s" + std::to_string(seed)) {
  if (dim_ < 1) throw argument_error("encoder dim must be >= 1");
}

std::vector<float> RandomProjectionEncoder::encode(const ContextImage& ctx) const {
  const auto& x = ctx.grid.cells;
  const size_t len = x.size();
  if (len == 0) throw encoder_error("empty grid for sample '" + ctx.provenance + "'");
  // Projection entries are regenerated from (seed, input length) so that
  // identical inputs always map to identical outputs.
  std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ULL ^ len);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(len));
  std::vector<float> out(dim_);
  for (uint64_t i = 0; i < dim_; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < len; ++j) acc += u(rng) * scale * x[j];
    out[i] = static_cast<float>(std::tanh(acc));
  }
  return out;
}

OneHotContextEncoder::OneHotContextEncoder(uint64_t dim)
    : dim_(dim), name_("onehot-d" + std::to_string(dim)) {
  if (dim_ < 1) throw argument_error("encoder dim must be >= 1");
}

std::vector<float> OneHotContextEncoder::encode(const ContextImage& ctx) const {
  if (ctx.grid.cells.size() != dim_)
    throw encoder_error("context block width " + std::to_string(ctx.grid.cells.size()) +
                        " != encoder dim " + std::to_string(dim_) + " for sample '" +
                        ctx.provenance + "'");
  return ctx.grid.cells;
}

core::FeatureSet extract_context_features(const std::vector<ContextImage>& contexts,
                                          const ContextEncoder& enc) {
  core::FeatureSet fs;
  fs.dim = enc.dim();
  fs.rows.reserve(contexts.size());
  fs.row_ids.reserve(contexts.size());
  for (const auto& ctx : contexts) {
    auto row = enc.encode(ctx);
    for (float v : row)
      if (!std::isfinite(v))
        throw encoder_error("encoder produced non-finite value for sample '" +
                            ctx.provenance + "'");
    fs.rows.push_back(std::move(row));
    fs.row_ids.push_back(ctx.provenance);
  }
  fs.validate();
  return fs;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::vector<double> to_double(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// k-means++ seeding: first center uniform, later centers proportional to the
// squared distance to the nearest already-chosen center.
std::vector<std::vector<double>> seed_centroids(const core::FeatureSet& features,
                                                size_t n, std::mt19937_64& rng) {
  const size_t rows = features.rows.size();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(n);
  std::uniform_int_distribution<size_t> first(0, rows - 1);
  centroids.push_back(to_double(features.rows[first(rng)]));

  std::vector<double> d2(rows);
  while (centroids.size() < n) {
    double total = 0.0;
    for (size_t r = 0; r < rows; ++r) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sq_dist(c, features.rows[r]));
      d2[r] = best;
      total += best;
    }
    size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      pick = rows - 1;
      for (size_t r = 0; r < rows; ++r) {
        acc += d2[r];
        if (acc >= target) { pick = r; break; }
      }
    }
    centroids.push_back(to_double(features.rows[pick]));
  }
  return centroids;
}

std::vector<size_t> assign_nearest(const core::FeatureSet& features,
                                   const std::vector<std::vector<double>>& centroids) {
  std::vector<size_t> out(features.rows.size());
  for (size_t r = 0; r < features.rows.size(); ++r) {
    size_t best = 0;
    double best_d = sq_dist(centroids[0], features.rows[r]);
    for (size_t k = 1; k < centroids.size(); ++k) {
      double d = sq_dist(centroids[k], features.rows[r]);
      if (d < best_d) { best_d = d; best = k; }  // ties keep the lowest index
    }
    out[r] = best;
  }
  return out;
}

void update_means(const core::FeatureSet& features, const std::vector<size_t>& assign,
                  std::vector<std::vector<double>>& centroids,
                  std::vector<size_t>& counts) {
  const size_t n = centroids.size();
  counts.assign(n, 0);
  for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
  for (size_t r = 0; r < features.rows.size(); ++r) {
    const auto& row = features.rows[r];
    auto& c = centroids[assign[r]];
    for (size_t j = 0; j < row.size(); ++j) c[j] += row[j];
    ++counts[assign[r]];
  }
  for (size_t k = 0; k < n; ++k)
    if (counts[k] > 0)
      for (double& v : centroids[k]) v /= static_cast<double>(counts[k]);
}

// An empty cluster keeps its stale centroid; move it onto the data point
// farthest from that centroid so the prior formula stays well defined.
bool reseed_empty(const core::FeatureSet& features,
                  std::vector<std::vector<double>>& centroids,
                  const std::vector<size_t>& counts) {
  bool changed = false;
  for (size_t k = 0; k < centroids.size(); ++k) {
    if (counts[k] > 0) continue;
    size_t far = 0;
    double far_d = -1.0;
    for (size_t r = 0; r < features.rows.size(); ++r) {
      double d = sq_dist(centroids[k], features.rows[r]);
      if (d > far_d) { far_d = d; far = r; }
    }
    centroids[k] = to_double(features.rows[far]);
    changed = true;
  }
  return changed;
}

void check_cluster_args(const core::FeatureSet& features, size_t n) {
  features.validate();
  if (n < 1) throw argument_error("cluster count must be >= 1");
  if (n > features.rows.size())
    throw argument_error("cluster count " + std::to_string(n) + " exceeds row count " +
                         std::to_string(features.rows.size()));
}

}  // namespace

ClusterResult kmeans_pp(const core::FeatureSet& features, size_t n, uint64_t seed) {
  check_cluster_args(features, n);
  std::mt19937_64 rng(seed);
  auto centroids = seed_centroids(features, n, rng);

  auto assign = assign_nearest(features, centroids);
  std::vector<size_t> counts;
  for (int iter = 0; iter < 300; ++iter) {
    update_means(features, assign, centroids, counts);
    if (reseed_empty(features, centroids, counts)) {
      assign = assign_nearest(features, centroids);
      continue;
    }
    auto next = assign_nearest(features, centroids);
    if (next == assign) break;
    assign = std::move(next);
  }

  update_means(features, assign, centroids, counts);
  if (std::find(counts.begin(), counts.end(), size_t{0}) != counts.end())
    throw argument_error("cluster count exceeds the number of distinct rows");
  return {std::move(assign), std::move(centroids)};
}

ClusterResult kmedoids(const core::FeatureSet& features, size_t n, uint64_t seed) {
  check_cluster_args(features, n);
  std::mt19937_64 rng(seed);
  auto medoids = seed_centroids(features, n, rng);

  auto assign = assign_nearest(features, medoids);
  for (int iter = 0; iter < 300; ++iter) {
    // Swap each medoid for the member minimizing total distance to its cluster.
    bool moved = false;
    for (size_t k = 0; k < n; ++k) {
      std::vector<size_t> members;
      for (size_t r = 0; r < assign.size(); ++r)
        if (assign[r] == k) members.push_back(r);
      if (members.empty()) continue;
      size_t best_r = members[0];
      double best_cost = std::numeric_limits<double>::infinity();
      for (size_t cand : members) {
        auto cv = to_double(features.rows[cand]);
        double cost = 0.0;
        for (size_t other : members) cost += std::sqrt(sq_dist(cv, features.rows[other]));
        if (cost < best_cost) { best_cost = cost; best_r = cand; }
      }
      auto nv = to_double(features.rows[best_r]);
      if (nv != medoids[k]) { medoids[k] = std::move(nv); moved = true; }
    }
    std::vector<size_t> counts(n, 0);
    for (size_t a : assign) ++counts[a];
    if (reseed_empty(features, medoids, counts)) moved = true;
    auto next = assign_nearest(features, medoids);
    if (!moved && next == assign) break;
    assign = std::move(next);
  }

  std::vector<size_t> counts(n, 0);
  for (size_t a : assign) ++counts[a];
  if (std::find(counts.begin(), counts.end(), size_t{0}) != counts.end())
    throw argument_error("cluster count exceeds the number of distinct rows");
  return {std::move(assign), std::move(medoids)};
}

void ConfounderDictionary::validate() const {
  if (n < 1 || dim < 1) throw validation_error("dictionary must have n >= 1 and dim >= 1");
  if (prototypes.size() != n * dim || priors.size() != n || member_counts.size() != n)
    throw validation_error("dictionary field lengths inconsistent");
  uint64_t count_sum = 0;
  double prior_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (member_counts[i] < 1) throw validation_error("member count must be >= 1");
    if (priors[i] != static_cast<double>(member_counts[i]) / static_cast<double>(total))
      throw validation_error("prior " + std::to_string(i) + " != member_count / total");
    count_sum += member_counts[i];
    prior_sum += priors[i];
  }
  if (count_sum != total) throw validation_error("member counts do not sum to total");
  if (std::abs(prior_sum - 1.0) > 1e-12) throw validation_error("priors do not sum to 1");
  for (double v : prototypes)
    if (!std::isfinite(v)) throw validation_error("non-finite prototype entry");
}

ConfounderDictionary build_dictionary(const core::FeatureSet& features, size_t n,
                                      uint64_t seed, const std::string& encoder_name,
                                      ClusterAlgo algo) {
  auto clusters = (algo == ClusterAlgo::kmeans_pp) ? kmeans_pp(features, n, seed)
                                                   : kmedoids(features, n, seed);
  ConfounderDictionary dict;
  dict.n = n;
  dict.dim = features.dim;
  dict.total = features.rows.size();
  dict.encoder_name = encoder_name;
  dict.seed = seed;
  dict.prototypes.assign(n * features.dim, 0.0);
  dict.member_counts.assign(n, 0);
  for (size_t r = 0; r < features.rows.size(); ++r) {
    double* p = dict.prototypes.data() + clusters.assignments[r] * features.dim;
    for (size_t j = 0; j < features.dim; ++j) p[j] += features.rows[r][j];
    ++dict.member_counts[clusters.assignments[r]];
  }
  dict.priors.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double* p = dict.prototypes.data() + i * features.dim;
    for (size_t j = 0; j < features.dim; ++j) p[j] /= static_cast<double>(dict.member_counts[i]);
    dict.priors[i] = static_cast<double>(dict.member_counts[i]) / static_cast<double>(dict.total);
  }
  dict.validate();
  return dict;
}

ConfounderDictionary random_dictionary(size_t n, size_t dim, uint64_t seed) {
  if (n < 1 || dim < 1) throw argument_error("random dictionary needs n >= 1 and dim >= 1");
  ConfounderDictionary dict;
  dict.n = n;
  dict.dim = dim;
  dict.total = n;
  dict.encoder_name = "random";
  dict.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  dict.prototypes.resize(n * dim);
  for (double& v : dict.prototypes) v = gauss(rng);
  dict.member_counts.assign(n, 1);
  dict.priors.resize(n);
  for (size_t i = 0; i < n; ++i)
    dict.priors[i] = 1.0 / static_cast<double>(n);
  dict.validate();
  return dict;
}

namespace {

constexpr char kDictMagic[8] = {'C', 'C', 'I', 'M', 'D', 'I', 'C', '1'};

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw corruption_error("truncated dictionary file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  uint64_t len = get_u64(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw corruption_error("truncated dictionary string");
  return s;
}

}  // namespace

void write_dictionary(const ConfounderDictionary& dict, const std::string& path) {
  dict.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write dictionary '" + path + "'");
  out.write(kDictMagic, 8);
  put_u64(out, dict.n);
  put_u64(out, dict.dim);
  out.write(reinterpret_cast<const char*>(dict.prototypes.data()),
            static_cast<std::streamsize>(dict.prototypes.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(dict.priors.data()),
            static_cast<std::streamsize>(dict.priors.size() * sizeof(double)));
  for (uint64_t c : dict.member_counts) put_u64(out, c);
  put_u64(out, dict.total);
  put_string(out, dict.encoder_name);
  put_u64(out, dict.seed);
}

ConfounderDictionary read_dictionary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open dictionary '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kDictMagic, 8) != 0)
    throw format_error("bad magic in dictionary '" + path + "'");
  ConfounderDictionary dict;
  dict.n = get_u64(in);
  dict.dim = get_u64(in);
  dict.prototypes.resize(dict.n * dict.dim);
  in.read(reinterpret_cast<char*>(dict.prototypes.data()),
          static_cast<std::streamsize>(dict.prototypes.size() * sizeof(double)));
  dict.priors.resize(dict.n);
  in.read(reinterpret_cast<char*>(dict.priors.data()),
          static_cast<std::streamsize>(dict.priors.size() * sizeof(double)));
  if (!in) throw corruption_error("truncated dictionary payload");
  dict.member_counts.resize(dict.n);
  for (auto& c : dict.member_counts) c = get_u64(in);
  dict.total = get_u64(in);
  dict.encoder_name = get_string(in);
  dict.seed = get_u64(in);
  dict.validate();
  return dict;
}

}  // namespace ccim::confounder
