#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ccim/ccim.hpp"
#include "ccim/core.hpp"
#include "ccim/metrics.hpp"
#include "ccim/scm.hpp"

namespace ccim::trainer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class LossMode { softmax_ce, binary_ce, squared_error };

std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

// tanh(W x + b)
struct EncoderLayer {
  MatrixXd W;
  VectorXd b;
  VectorXd forward(const VectorXd& x) const { return (W * x + b).array().tanh(); }
};

// Two-branch recognition model: subject encoder, context encoder, fusion by
// concatenation, and either a plain linear head or the intervention head.
struct BaselineModel {
  EncoderLayer f_s, f_c;
  MatrixXd W_out;
  VectorXd b_out;
  bool ccim_enabled = false;
  intervention::CCIMParams ccim;               // valid when ccim_enabled
  confounder::ConfounderDictionary dict;       // valid when ccim_enabled
  LossMode loss_mode = LossMode::softmax_ce;
  int n_s_in = 0, n_c_in = 0, n_out = 0;

  Eigen::Index d_h() const { return f_s.W.rows() + f_c.W.rows(); }
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double lr = 0.05;
  uint64_t seed = 1;
  LossMode loss = LossMode::softmax_ce;
  bool ccim_enabled = false;
  intervention::AttentionVariant variant = intervention::AttentionVariant::dot_product;
  bool use_lambda = true;
  bool use_prior = true;
  int hidden = 32;  // per-branch width
  int d_m = 32;
  int d_n = 32;
  // Init bound multiplier for the intervention-path weights (W_g, W_q, W_k,
  // W_t). At 1.0 the attention stays frozen near uniform under plain SGD;
  // 16.0 puts one-hot-scale prototypes in the trainable regime.
  double init_gain = 16.0;

  void validate() const;
};

// One training/eval instance: dense subject and context inputs plus labels.
struct Instance {
  VectorXd s_in, c_in;
  core::LabelSet labels;
};

VectorXd fuse(const VectorXd& s, const VectorXd& c);

// One-hot expansion of synthetic records, filtered by split.
std::vector<Instance> instances_from_samples(const std::vector<core::Sample>& samples,
                                             core::Split split);
std::vector<Instance> instances_from_dataset(const scm::SyntheticDataset& data,
                                             int n_s, int n_c, int n_y);

// Branch weights are drawn before any head weights, so the vanilla and
// intervened models share identical f_s/f_c initializations under one seed.
BaselineModel build_model(int n_s_in, int n_c_in, int n_out, const TrainConfig& cfg,
                          const confounder::ConfounderDictionary* dict);

struct LossTrace {
  std::vector<double> per_epoch;
};

// Summed (unaveraged) gradients over a set of instances, computed one sample
// at a time through the canonical scalar forward/backward path. The batched
// train() step must match lr/B times these; the tests pin that equivalence.
struct ModelGrads {
  MatrixXd W_s, W_c, W_out;
  VectorXd b_s, b_c, b_out;
  intervention::CCIMGrads ccim;
};

ModelGrads reference_gradients(const BaselineModel& model,
                               const std::vector<Instance>& data,
                               double* loss_sum = nullptr);

LossTrace train(BaselineModel& model, const std::vector<Instance>& data,
                const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;  // single-label only
  metrics::MetricReport report;
};

EvalResult evaluate(const BaselineModel& model, const std::vector<Instance>& data,
                    const std::string& regime_tag = "");

// Raw head output for one instance (pre-argmax scores).
VectorXd predict_scores(const BaselineModel& model, const Instance& inst);

// Checkpoint: magic "CCIMMDL1"; embeds branch weights, head, and (when the
// intervention head is enabled) the CCIM parameters and dictionary.
void save_model(const BaselineModel& model, const std::string& path);
BaselineModel load_model(const std::string& path);

}  // namespace ccim::trainer
