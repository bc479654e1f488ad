#pragma once

#include <cstdint>
#include <vector>

#include "ccim/error.hpp"

namespace ccim::scm {

// Discrete causal model over (Z, X, S, C, Y) with edges Z->X, Z->C, X->C,
// X->S, S->Y, C->Y. The only backdoor path from X to Y runs X<-Z->C->Y.
struct SCMConfig {
  int n_z = 10, n_x = 10, n_s = 8, n_c = 20, n_y = 4;  // each in [2, 32]
  double bias_beta = 0.9;   // strength of the Z->X alignment, in [0, 1]
  double alpha_s = 0.8;     // accuracy of the X->S noisy channel
  double alpha_c = 0.6;     // accuracy of the (X,Z)->C noisy channel
  double alpha_y = 0.9;     // mass on the (S,C)->Y lookup target
  uint64_t seed = 23;
};

struct SCMSpec {
  SCMConfig config;
  std::vector<double> p_z;             // [z]
  std::vector<double> p_x_given_z;     // [z][x]
  std::vector<double> p_s_given_x;     // [x][s]
  std::vector<double> p_c_given_xz;    // [x][z][c]
  std::vector<double> p_y_given_sc;    // [s][c][y]

  double pz(int z) const { return p_z[z]; }
  double px_z(int x, int z) const { return p_x_given_z[z * config.n_x + x]; }
  double ps_x(int s, int x) const { return p_s_given_x[x * config.n_s + s]; }
  double pc_xz(int c, int x, int z) const {
    return p_c_given_xz[(x * config.n_z + z) * config.n_c + c];
  }
  double py_sc(int y, int s, int c) const {
    return p_y_given_sc[(s * config.n_c + c) * config.n_y + y];
  }
  void validate() const;
};

struct Record {
  int x, s, c, z, y;  // z recorded for auditing only, never fed to models
};

enum class Regime { biased, deconfounded };

struct SyntheticDataset {
  std::vector<Record> records;
  Regime regime = Regime::biased;
  uint64_t seed = 0;
};

SCMSpec build_scm(const SCMConfig& config);

// biased: ancestral sampling from the SCM. deconfounded: the Z->X edge is
// severed and x is drawn from the marginal of X, realizing the intervention
// distribution used for unbiased evaluation.
SyntheticDataset sample_dataset(const SCMSpec& scm, size_t n, uint64_t seed,
                                Regime regime);

// P(Y|X=x) by full enumeration over (z, s, c), with P(z|x) from Bayes.
std::vector<double> exact_likelihood(const SCMSpec& scm, int x);

// P(Y|do(X=x)): same sum with the prior P(z) replacing P(z|x).
std::vector<double> exact_intervention(const SCMSpec& scm, int x);

// Independent oracle: clamps X in the mutilated graph and enumerates the full
// joint over every remaining variable through generic factor products.
std::vector<double> mutilated_intervention(const SCMSpec& scm, int x);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace ccim::scm
