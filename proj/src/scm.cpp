#include "ccim/scm.hpp"

#include <cmath>
#include <random>

namespace ccim::scm {

namespace {

void check_row(const std::vector<double>& table, size_t offset, int width) {
  double sum = 0.0;
  for (int i = 0; i < width; ++i) {
    double v = table[offset + i];
    if (!(v >= 0.0)) throw validation_error("negative CPT entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw validation_error("CPT row does not sum to 1");
}

// Noisy channel: mass alpha on a designated target outcome, the remainder
// spread uniformly over the others.
void fill_channel_row(std::vector<double>& table, size_t offset, int width,
                      int target, double alpha) {
  if (width == 1) { table[offset] = 1.0; return; }
  double rest = (1.0 - alpha) / (width - 1);
  for (int i = 0; i < width; ++i) table[offset + i] = (i == target) ? alpha : rest;
}

}  // namespace

void SCMSpec::validate() const {
  const auto& c = config;
  for (int v : {c.n_z, c.n_x, c.n_s, c.n_c, c.n_y})
    if (v < 2 || v > 32) throw argument_error("cardinalities must lie in [2, 32]");
  check_row(p_z, 0, c.n_z);
  for (int z = 0; z < c.n_z; ++z) check_row(p_x_given_z, z * c.n_x, c.n_x);
  for (int x = 0; x < c.n_x; ++x) check_row(p_s_given_x, x * c.n_s, c.n_s);
  for (int x = 0; x < c.n_x; ++x)
    for (int z = 0; z < c.n_z; ++z)
      check_row(p_c_given_xz, (x * c.n_z + z) * c.n_c, c.n_c);
  for (int s = 0; s < c.n_s; ++s)
    for (int cc = 0; cc < c.n_c; ++cc)
      check_row(p_y_given_sc, (s * c.n_c + cc) * c.n_y, c.n_y);
}

SCMSpec build_scm(const SCMConfig& config) {
  if (!(config.bias_beta >= 0.0 && config.bias_beta <= 1.0))
    throw argument_error("bias_beta must lie in [0, 1]");
  for (int v : {config.n_z, config.n_x, config.n_s, config.n_c, config.n_y})
    if (v < 2 || v > 32) throw argument_error("cardinalities must lie in [2, 32]");

  SCMSpec scm;
  scm.config = config;
  const auto& c = config;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> pick_s(0, c.n_s - 1);
  std::uniform_int_distribution<int> pick_c(0, c.n_c - 1);
  std::uniform_int_distribution<int> pick_y(0, c.n_y - 1);

  scm.p_z.assign(c.n_z, 1.0 / c.n_z);

  // X mixes a uniform draw with an alignment kernel concentrated on
  // x = z mod n_x; beta dials the spurious Z-X correlation from none to exact.
  scm.p_x_given_z.assign(static_cast<size_t>(c.n_z) * c.n_x, 0.0);
  for (int z = 0; z < c.n_z; ++z)
    for (int x = 0; x < c.n_x; ++x)
      scm.p_x_given_z[z * c.n_x + x] =
          (1.0 - c.bias_beta) / c.n_x + (x == z % c.n_x ? c.bias_beta : 0.0);

  scm.p_s_given_x.assign(static_cast<size_t>(c.n_x) * c.n_s, 0.0);
  for (int x = 0; x < c.n_x; ++x)
    fill_channel_row(scm.p_s_given_x, x * c.n_s, c.n_s, pick_s(rng), c.alpha_s);

  scm.p_c_given_xz.assign(static_cast<size_t>(c.n_x) * c.n_z * c.n_c, 0.0);
  for (int x = 0; x < c.n_x; ++x)
    for (int z = 0; z < c.n_z; ++z)
      fill_channel_row(scm.p_c_given_xz, (x * c.n_z + z) * c.n_c, c.n_c,
                       pick_c(rng), c.alpha_c);

  scm.p_y_given_sc.assign(static_cast<size_t>(c.n_s) * c.n_c * c.n_y, 0.0);
  for (int s = 0; s < c.n_s; ++s)
    for (int cc = 0; cc < c.n_c; ++cc)
      fill_channel_row(scm.p_y_given_sc, (s * c.n_c + cc) * c.n_y, c.n_y,
                       pick_y(rng), c.alpha_y);

  scm.validate();
  return scm;
}

namespace {

int draw(const std::vector<double>& table, size_t offset, int width,
         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double target = u(rng), acc = 0.0;
  for (int i = 0; i < width; ++i) {
    acc += table[offset + i];
    if (target <= acc) return i;
  }
  return width - 1;
}

std::vector<double> x_marginal(const SCMSpec& scm) {
  const auto& c = scm.config;
  std::vector<double> px(c.n_x, 0.0);
  for (int x = 0; x < c.n_x; ++x)
    for (int z = 0; z < c.n_z; ++z) px[x] += scm.pz(z) * scm.px_z(x, z);
  return px;
}

}  // namespace

SyntheticDataset sample_dataset(const SCMSpec& scm, size_t n, uint64_t seed,
                                Regime regime) {
  if (n < 1) throw argument_error("sample count must be >= 1");
  scm.validate();
  const auto& c = scm.config;
  SyntheticDataset ds;
  ds.regime = regime;
  ds.seed = seed;
  ds.records.reserve(n);
  std::mt19937_64 rng(seed);
  auto px = x_marginal(scm);
  for (size_t i = 0; i < n; ++i) {
    Record r{};
    r.z = draw(scm.p_z, 0, c.n_z, rng);
    r.x = (regime == Regime::biased)
              ? draw(scm.p_x_given_z, static_cast<size_t>(r.z) * c.n_x, c.n_x, rng)
              : draw(px, 0, c.n_x, rng);
    r.s = draw(scm.p_s_given_x, static_cast<size_t>(r.x) * c.n_s, c.n_s, rng);
    r.c = draw(scm.p_c_given_xz, (static_cast<size_t>(r.x) * c.n_z + r.z) * c.n_c,
               c.n_c, rng);
    r.y = draw(scm.p_y_given_sc, (static_cast<size_t>(r.s) * c.n_c + r.c) * c.n_y,
               c.n_y, rng);
    ds.records.push_back(r);
  }
  return ds;
}

namespace {

// Shared enumeration over (z, s, c) with a caller-chosen weight for z.
std::vector<double> enumerate_y(const SCMSpec& scm, int x,
                                const std::vector<double>& z_weight) {
  const auto& c = scm.config;
  std::vector<double> py(c.n_y, 0.0);
  for (int z = 0; z < c.n_z; ++z)
    for (int s = 0; s < c.n_s; ++s)
      for (int cc = 0; cc < c.n_c; ++cc) {
        double w = z_weight[z] * scm.ps_x(s, x) * scm.pc_xz(cc, x, z);
        for (int y = 0; y < c.n_y; ++y) py[y] += w * scm.py_sc(y, s, cc);
      }
  return py;
}

}  // namespace

std::vector<double> exact_likelihood(const SCMSpec& scm, int x) {
  const auto& c = scm.config;
  if (x < 0 || x >= c.n_x) throw argument_error("x index out of range");
  std::vector<double> z_post(c.n_z, 0.0);
  double px = 0.0;
  for (int z = 0; z < c.n_z; ++z) {
    z_post[z] = scm.pz(z) * scm.px_z(x, z);
    px += z_post[z];
  }
  if (px <= 0.0) throw conditioning_error("P(X=x) is zero, cannot condition");
  for (double& v : z_post) v /= px;
  return enumerate_y(scm, x, z_post);
}

std::vector<double> exact_intervention(const SCMSpec& scm, int x) {
  if (x < 0 || x >= scm.config.n_x) throw argument_error("x index out of range");
  return enumerate_y(scm, x, scm.p_z);
}

std::vector<double> mutilated_intervention(const SCMSpec& scm, int x) {
  const auto& c = scm.config;
  if (x < 0 || x >= c.n_x) throw argument_error("x index out of range");

  // Graph surgery: X has no parents and is clamped to x with probability 1.
  // The joint over every variable of the mutilated model is enumerated
  // directly, with no algebraic simplification shared with exact_intervention.
  struct Node {
    int card;
    // probability of value given the full assignment so far
    double (*prob)(const SCMSpec&, const int*, int);
  };
  // assignment layout: [z, x, s, c, y]
  static const Node nodes[5] = {
      {0, [](const SCMSpec& m, const int*, int v) { return m.pz(v); }},
      {0, [](const SCMSpec&, const int* a, int v) {
             return v == a[5] ? 1.0 : 0.0;  // a[5] holds the clamp value
           }},
      {0, [](const SCMSpec& m, const int* a, int v) { return m.ps_x(v, a[1]); }},
      {0, [](const SCMSpec& m, const int* a, int v) { return m.pc_xz(v, a[1], a[0]); }},
      {0, [](const SCMSpec& m, const int* a, int v) { return m.py_sc(v, a[2], a[3]); }},
  };
  int cards[5] = {c.n_z, c.n_x, c.n_s, c.n_c, c.n_y};

  std::vector<double> py(c.n_y, 0.0);
  int assign[6] = {0, 0, 0, 0, 0, x};
  double partial[6];
  partial[0] = 1.0;
  int depth = 0;
  assign[0] = -1;
  while (depth >= 0) {
    if (++assign[depth] >= cards[depth]) {
      --depth;
      continue;
    }
    double p = nodes[depth].prob(scm, assign, assign[depth]);
    double w = partial[depth] * p;
    if (depth == 4) {
      py[assign[4]] += w;
    } else if (w > 0.0) {
      ++depth;
      partial[depth] = w;
      assign[depth] = -1;
    }
  }
  double total = 0.0;
  for (double v : py) total += v;
  if (total <= 0.0) throw numeric_error("mutilated joint has zero mass");
  for (double& v : py) v /= total;
  return py;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw shape_error("distributions differ in length");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

}  // namespace ccim::scm
