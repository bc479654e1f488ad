#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

#include "ccim/confounder.hpp"
#include "ccim/error.hpp"

namespace ccim::intervention {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class AttentionVariant { dot_product, additive };

std::string to_string(AttentionVariant v);
AttentionVariant variant_from_string(const std::string& s);

// Learnable weights of the intervention layer plus the ablation switches.
struct CCIMParams {
  MatrixXd W_h;  // d_m x d_h
  MatrixXd W_g;  // d_m x d
  MatrixXd W_q;  // d_n x d_h
  MatrixXd W_k;  // d_n x d
  VectorXd W_t;  // d_n, additive variant only
  AttentionVariant variant = AttentionVariant::dot_product;
  bool use_lambda = true;
  bool use_prior = true;
  // Dot-product scores divide by sqrt(prototype dim) by default; this switch
  // divides by sqrt(d_n) instead.
  bool scale_by_dn = false;

  Eigen::Index d_h() const { return W_h.cols(); }
  Eigen::Index d() const { return W_g.cols(); }
  Eigen::Index d_m() const { return W_h.rows(); }
  Eigen::Index d_n() const { return W_q.rows(); }
  void validate_against(const confounder::ConfounderDictionary& dict) const;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, seeded. gain multiplies the
// bounds of the intervention-path weights (W_g, W_q, W_k, W_t) only; W_h stays
// at the standard bound. At gain 1 the attention scores start so close to
// uniform that plain SGD cannot leave the saddle, so the trainer defaults to a
// larger gain.
CCIMParams init_params(Eigen::Index d_h, Eigen::Index d, Eigen::Index d_m,
                       Eigen::Index d_n, AttentionVariant variant, uint64_t seed,
                       double gain = 1.0);

struct CCIMOutput {
  VectorXd vector;       // d_m
  VectorXd lambda;       // N
  VectorXd expectation;  // d
};

// score_offset shifts every pre-softmax score; softmax is shift invariant so
// lambda must not change (exposed for the invariance test).
VectorXd attention_dot(const VectorXd& h, const confounder::ConfounderDictionary& dict,
                       const CCIMParams& p, double score_offset = 0.0);
VectorXd attention_additive(const VectorXd& h,
                            const confounder::ConfounderDictionary& dict,
                            const CCIMParams& p, double score_offset = 0.0);

// E_z[g(z)] = sum_i lambda_i * z_i * P(z_i). With use_lambda off every
// lambda_i is taken as 1; with use_prior off every P(z_i) is taken as 1.
VectorXd confounder_expectation(const VectorXd& lambda,
                                const confounder::ConfounderDictionary& dict,
                                bool use_lambda, bool use_prior);

// W_h h + W_g E_z[g(z)], the affine intervention head.
CCIMOutput forward(const VectorXd& h, const confounder::ConfounderDictionary& dict,
                   const CCIMParams& p);

struct CCIMGrads {
  MatrixXd W_h, W_g, W_q, W_k;
  VectorXd W_t;
  VectorXd h;
};

// Gradients of a scalar loss with upstream gradient d_out = dLoss/dOutput.
CCIMGrads backward(const VectorXd& h, const confounder::ConfounderDictionary& dict,
                   const CCIMParams& p, const VectorXd& d_out);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
};

// Central finite differences (step 1e-6) against the analytic gradients for
// every entry of W_h, W_g, W_q, W_k, W_t and h.
GradCheckReport check_gradients(const CCIMParams& p, const VectorXd& h,
                                const confounder::ConfounderDictionary& dict,
                                const std::function<double(const VectorXd&)>& loss,
                                const std::function<VectorXd(const VectorXd&)>& loss_grad);

// Checkpoint: magic "CCIMPAR1", dims header, matrices row-major float64,
// then variant and flags.
void write_params(const CCIMParams& p, const std::string& path);
CCIMParams read_params(const std::string& path);

// Dictionary prototypes as an Eigen matrix (N x d) for matrix-form paths.
MatrixXd prototype_matrix(const confounder::ConfounderDictionary& dict);

}  // namespace ccim::intervention
