#include "ccim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace ccim::trainer {

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::softmax_ce: return "softmax-ce";
    case LossMode::binary_ce: return "binary-ce";
    case LossMode::squared_error: return "squared-error";
  }
  return "softmax-ce";
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "softmax-ce") return LossMode::softmax_ce;
  if (s == "binary-ce") return LossMode::binary_ce;
  if (s == "squared-error") return LossMode::squared_error;
  throw argument_error("unknown loss mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw argument_error("epochs must be >= 1");
  if (batch_size < 1) throw argument_error("batch size must be >= 1");
  if (lr < 0.0) throw argument_error("learning rate must be >= 0");
  if (hidden < 1 || d_m < 1 || d_n < 1) throw argument_error("model dims must be >= 1");
  if (!(init_gain > 0.0)) throw argument_error("init gain must be > 0");
}

VectorXd fuse(const VectorXd& s, const VectorXd& c) {
  if (s.size() == 0 || c.size() == 0)
    throw argument_error("fusion inputs must be nonempty");
  if (!s.allFinite() || !c.allFinite()) throw numeric_error("non-finite fusion input");
  VectorXd h(s.size() + c.size());
  h << s, c;
  return h;
}

namespace {

VectorXd one_hot(int index, int width) {
  VectorXd v = VectorXd::Zero(width);
  v(index) = 1.0;
  return v;
}

void check_label_mode(const core::LabelSet& labels, LossMode mode) {
  bool ok = (mode == LossMode::softmax_ce && labels.is_single()) ||
            (mode == LossMode::binary_ce && labels.is_multi()) ||
            (mode == LossMode::squared_error && labels.is_vad());
  if (!ok) throw config_error("label variant does not match the configured loss mode");
}

VectorXd label_target(const core::LabelSet& labels, int n_out) {
  if (const auto* s = std::get_if<core::SingleLabel>(&labels.value))
    return one_hot(s->index, n_out);
  if (const auto* m = std::get_if<core::MultiLabel>(&labels.value)) {
    VectorXd t = VectorXd::Zero(n_out);
    for (int i = 0; i < n_out; ++i) t(i) = m->bits[i] ? 1.0 : 0.0;
    return t;
  }
  const auto& v = std::get<core::VadLabel>(labels.value);
  VectorXd t(3);
  t << v.valence, v.arousal, v.dominance;
  return t;
}

struct ForwardState {
  VectorXd s_vec, c_vec, h, head_in, logits;
  intervention::CCIMOutput ccim_out;
};

ForwardState model_forward(const BaselineModel& model, const Instance& inst) {
  ForwardState st;
  st.s_vec = model.f_s.forward(inst.s_in);
  st.c_vec = model.f_c.forward(inst.c_in);
  st.h = fuse(st.s_vec, st.c_vec);
  if (model.ccim_enabled) {
    st.ccim_out = intervention::forward(st.h, model.dict, model.ccim);
    st.head_in = st.ccim_out.vector;
  } else {
    st.head_in = st.h;
  }
  st.logits = model.W_out * st.head_in + model.b_out;
  return st;
}

// loss value and gradient at the logits for one instance
double loss_and_grad(LossMode mode, const VectorXd& logits, const VectorXd& target,
                     VectorXd& d_logits) {
  switch (mode) {
    case LossMode::softmax_ce: {
      VectorXd shifted = logits.array() - logits.maxCoeff();
      VectorXd ex = shifted.array().exp();
      VectorXd p = ex / ex.sum();
      d_logits = p - target;
      double ll = 0.0;
      for (Eigen::Index i = 0; i < p.size(); ++i)
        if (target(i) > 0.0) ll -= target(i) * std::log(std::max(p(i), 1e-300));
      return ll;
    }
    case LossMode::binary_ce: {
      double k = static_cast<double>(logits.size());
      VectorXd sig = 1.0 / (1.0 + (-logits.array()).exp());
      d_logits = (sig - target) / k;
      double loss = 0.0;
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        double s = std::clamp(sig(i), 1e-12, 1.0 - 1e-12);
        loss -= target(i) * std::log(s) + (1.0 - target(i)) * std::log(1.0 - s);
      }
      return loss / k;
    }
    case LossMode::squared_error: {
      double k = static_cast<double>(logits.size());
      VectorXd diff = logits - target;
      d_logits = 2.0 * diff / k;
      return diff.squaredNorm() / k;
    }
  }
  throw argument_error("unhandled loss mode");
}

ModelGrads zero_grads(const BaselineModel& m) {
  ModelGrads g;
  g.W_s = MatrixXd::Zero(m.f_s.W.rows(), m.f_s.W.cols());
  g.b_s = VectorXd::Zero(m.f_s.b.size());
  g.W_c = MatrixXd::Zero(m.f_c.W.rows(), m.f_c.W.cols());
  g.b_c = VectorXd::Zero(m.f_c.b.size());
  g.W_out = MatrixXd::Zero(m.W_out.rows(), m.W_out.cols());
  g.b_out = VectorXd::Zero(m.b_out.size());
  if (m.ccim_enabled) {
    g.ccim.W_h = MatrixXd::Zero(m.ccim.W_h.rows(), m.ccim.W_h.cols());
    g.ccim.W_g = MatrixXd::Zero(m.ccim.W_g.rows(), m.ccim.W_g.cols());
    g.ccim.W_q = MatrixXd::Zero(m.ccim.W_q.rows(), m.ccim.W_q.cols());
    g.ccim.W_k = MatrixXd::Zero(m.ccim.W_k.rows(), m.ccim.W_k.cols());
    g.ccim.W_t = VectorXd::Zero(m.ccim.W_t.size());
  }
  return g;
}

void accumulate_backward(const BaselineModel& model, const Instance& inst,
                         const ForwardState& st, const VectorXd& d_logits,
                         ModelGrads& g) {
  g.W_out += d_logits * st.head_in.transpose();
  g.b_out += d_logits;
  VectorXd d_head_in = model.W_out.transpose() * d_logits;

  VectorXd d_h;
  if (model.ccim_enabled) {
    auto cg = intervention::backward(st.h, model.dict, model.ccim, d_head_in);
    g.ccim.W_h += cg.W_h;
    g.ccim.W_g += cg.W_g;
    g.ccim.W_q += cg.W_q;
    g.ccim.W_k += cg.W_k;
    g.ccim.W_t += cg.W_t;
    d_h = cg.h;
  } else {
    d_h = d_head_in;
  }

  const Eigen::Index ns = st.s_vec.size();
  VectorXd d_s_pre = d_h.head(ns).cwiseProduct(
      (1.0 - st.s_vec.array().square()).matrix());
  VectorXd d_c_pre = d_h.tail(st.c_vec.size()).cwiseProduct(
      (1.0 - st.c_vec.array().square()).matrix());
  g.W_s += d_s_pre * inst.s_in.transpose();
  g.b_s += d_s_pre;
  g.W_c += d_c_pre * inst.c_in.transpose();
  g.b_c += d_c_pre;
}

MatrixXd uniform_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

}  // namespace

std::vector<Instance> instances_from_samples(const std::vector<core::Sample>& samples,
                                             core::Split split) {
  std::vector<Instance> out;
  for (const auto& s : samples) {
    if (s.split != split) continue;
    if (!s.synthetic)
      throw config_error("sample '" + s.sample_id +
                         "' has no synthetic record; the trainer consumes "
                         "symbolic subject/context blocks");
    Instance inst;
    inst.s_in = one_hot(s.synthetic->s, s.synthetic->n_s);
    inst.c_in = one_hot(s.synthetic->c, s.synthetic->n_c);
    inst.labels = s.labels;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> instances_from_dataset(const scm::SyntheticDataset& data,
                                             int n_s, int n_c, int n_y) {
  std::vector<Instance> out;
  out.reserve(data.records.size());
  for (const auto& r : data.records) {
    Instance inst;
    inst.s_in = one_hot(r.s, n_s);
    inst.c_in = one_hot(r.c, n_c);
    inst.labels.value = core::SingleLabel{r.y, n_y};
    out.push_back(std::move(inst));
  }
  return out;
}

BaselineModel build_model(int n_s_in, int n_c_in, int n_out, const TrainConfig& cfg,
                          const confounder::ConfounderDictionary* dict) {
  cfg.validate();
  if (n_s_in < 1 || n_c_in < 1 || n_out < 1)
    throw argument_error("model input/output widths must be >= 1");
  if (cfg.ccim_enabled && dict == nullptr)
    throw config_error("intervention head requested without a dictionary");

  std::mt19937_64 rng(cfg.seed);
  BaselineModel model;
  model.n_s_in = n_s_in;
  model.n_c_in = n_c_in;
  model.n_out = n_out;
  model.loss_mode = cfg.loss;
  model.f_s.W = uniform_init(cfg.hidden, n_s_in, rng);
  model.f_s.b = VectorXd::Zero(cfg.hidden);
  model.f_c.W = uniform_init(cfg.hidden, n_c_in, rng);
  model.f_c.b = VectorXd::Zero(cfg.hidden);

  const Eigen::Index d_h = 2 * cfg.hidden;
  if (cfg.ccim_enabled) {
    model.ccim_enabled = true;
    model.dict = *dict;
    model.ccim = intervention::init_params(d_h, static_cast<Eigen::Index>(dict->dim),
                                           cfg.d_m, cfg.d_n, cfg.variant,
                                           cfg.seed ^ 0xCC1D5EEDULL, cfg.init_gain);
    model.ccim.use_lambda = cfg.use_lambda;
    model.ccim.use_prior = cfg.use_prior;
    model.W_out = uniform_init(n_out, cfg.d_m, rng);
  } else {
    model.W_out = uniform_init(n_out, d_h, rng);
  }
  model.b_out = VectorXd::Zero(n_out);
  return model;
}

namespace {

// Batched loss over the logits matrix (rows = samples). Returns the summed
// per-sample loss; writes dLoss/dLogits (un-averaged, the update step divides
// by the batch size).
double batch_loss_and_grad(LossMode mode, const MatrixXd& logits, const MatrixXd& target,
                           MatrixXd& d_logits) {
  switch (mode) {
    case LossMode::softmax_ce: {
      MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
      MatrixXd p = shifted.array().exp();
      p.array().colwise() /= p.rowwise().sum().array();
      d_logits = p - target;
      return -(target.array() * p.array().max(1e-300).log()).sum();
    }
    case LossMode::binary_ce: {
      double k = static_cast<double>(logits.cols());
      MatrixXd sig = 1.0 / (1.0 + (-logits.array()).exp());
      d_logits = (sig - target) / k;
      auto s = sig.array().max(1e-12).min(1.0 - 1e-12);
      return -(target.array() * s.log() +
               (1.0 - target.array()) * (1.0 - s).log()).sum() / k;
    }
    case LossMode::squared_error: {
      double k = static_cast<double>(logits.cols());
      MatrixXd diff = logits - target;
      d_logits = 2.0 * diff / k;
      return diff.squaredNorm() / k;
    }
  }
  throw argument_error("unhandled loss mode");
}

}  // namespace

LossTrace train(BaselineModel& model, const std::vector<Instance>& data,
                const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw argument_error("training data is empty");
  for (const auto& inst : data) check_label_mode(inst.labels, model.loss_mode);

  const auto n = static_cast<Eigen::Index>(data.size());
  const Eigen::Index hid = model.f_s.W.rows();

  // Gather the corpus once; batches are row slices through the shuffled order.
  MatrixXd S_all(n, model.n_s_in), C_all(n, model.n_c_in), T_all(n, model.n_out);
  for (Eigen::Index i = 0; i < n; ++i) {
    S_all.row(i) = data[i].s_in.transpose();
    C_all.row(i) = data[i].c_in.transpose();
    T_all.row(i) = label_target(data[i].labels, model.n_out).transpose();
  }

  MatrixXd Z;  // N x d prototypes
  VectorXd priors;
  const bool use_ccim = model.ccim_enabled;
  const bool use_lambda = use_ccim && model.ccim.use_lambda;
  if (use_ccim) {
    model.ccim.validate_against(model.dict);
    Z = intervention::prototype_matrix(model.dict);
    priors = Eigen::Map<const VectorXd>(model.dict.priors.data(),
                                        static_cast<Eigen::Index>(model.dict.n));
  }

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5A5A5A5AULL);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  LossTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto bsz = static_cast<Eigen::Index>(end - start);

      MatrixXd S(bsz, model.n_s_in), C(bsz, model.n_c_in), T(bsz, model.n_out);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        auto row = static_cast<Eigen::Index>(order[start + k]);
        S.row(k) = S_all.row(row);
        C.row(k) = C_all.row(row);
        T.row(k) = T_all.row(row);
      }

      // forward
      MatrixXd S_v = ((S * model.f_s.W.transpose()).rowwise() +
                      model.f_s.b.transpose()).array().tanh();
      MatrixXd C_v = ((C * model.f_c.W.transpose()).rowwise() +
                      model.f_c.b.transpose()).array().tanh();
      MatrixXd H(bsz, 2 * hid);
      H << S_v, C_v;

      MatrixXd head_in, Q, K, Lam, E, Scores;
      std::vector<MatrixXd> tanh_u;  // additive variant, one B x d_n slab per prototype
      const bool additive =
          use_ccim && model.ccim.variant == intervention::AttentionVariant::additive;
      if (use_ccim) {
        const auto N = static_cast<Eigen::Index>(model.dict.n);
        if (use_lambda) {
          Q = H * model.ccim.W_q.transpose();    // B x d_n
          K = Z * model.ccim.W_k.transpose();    // N x d_n
          if (!additive) {
            double scale = std::sqrt(static_cast<double>(
                model.ccim.scale_by_dn ? model.ccim.d_n() : model.ccim.d()));
            Scores = Q * K.transpose() / scale;
          } else {
            Scores.resize(bsz, N);
            tanh_u.reserve(N);
            for (Eigen::Index i = 0; i < N; ++i) {
              tanh_u.push_back((Q.rowwise() + K.row(i)).array().tanh());
              Scores.col(i) = tanh_u.back() * model.ccim.W_t;
            }
          }
          MatrixXd shifted = Scores.colwise() - Scores.rowwise().maxCoeff();
          Lam = shifted.array().exp();
          Lam.array().colwise() /= Lam.rowwise().sum().array();
        } else {
          Lam = MatrixXd::Ones(bsz, N);
        }
        MatrixXd W = Lam;
        if (model.ccim.use_prior) W.array().rowwise() *= priors.transpose().array();
        E = W * Z;  // B x d
        head_in = H * model.ccim.W_h.transpose() + E * model.ccim.W_g.transpose();
      } else {
        head_in = H;
      }
      MatrixXd logits =
          (head_in * model.W_out.transpose()).rowwise() + model.b_out.transpose();

      MatrixXd dL;
      epoch_loss += batch_loss_and_grad(model.loss_mode, logits, T, dL);

      // backward
      MatrixXd gW_out = dL.transpose() * head_in;
      VectorXd gb_out = dL.colwise().sum().transpose();
      MatrixXd dV = dL * model.W_out;

      MatrixXd dH, gW_h, gW_g, gW_q, gW_k;
      VectorXd gW_t;
      if (use_ccim) {
        gW_h = dV.transpose() * H;
        gW_g = dV.transpose() * E;
        dH = dV * model.ccim.W_h;
        if (use_lambda) {
          MatrixXd dE = dV * model.ccim.W_g;  // B x d
          MatrixXd dLam = dE * Z.transpose();
          if (model.ccim.use_prior) dLam.array().rowwise() *= priors.transpose().array();
          VectorXd inner = (Lam.array() * dLam.array()).rowwise().sum();
          MatrixXd dScores = Lam.array() * (dLam.colwise() - inner).array();
          MatrixXd dQ;
          if (!additive) {
            double scale = std::sqrt(static_cast<double>(
                model.ccim.scale_by_dn ? model.ccim.d_n() : model.ccim.d()));
            dQ = dScores * K / scale;
            gW_k = (Q.transpose() * (dScores * Z)) / scale;
          } else {
            const auto N = static_cast<Eigen::Index>(model.dict.n);
            dQ = MatrixXd::Zero(bsz, model.ccim.d_n());
            gW_k = MatrixXd::Zero(model.ccim.d_n(), model.ccim.d());
            gW_t = VectorXd::Zero(model.ccim.d_n());
            for (Eigen::Index i = 0; i < N; ++i) {
              gW_t += tanh_u[i].transpose() * dScores.col(i);
              MatrixXd dU = (dScores.col(i) * model.ccim.W_t.transpose()).array() *
                            (1.0 - tanh_u[i].array().square());
              dQ += dU;
              gW_k += dU.colwise().sum().transpose() * Z.row(i);
            }
          }
          gW_q = dQ.transpose() * H;
          dH += dQ * model.ccim.W_q;
        }
      } else {
        dH = dV;
      }

      MatrixXd dS_pre = dH.leftCols(hid).array() * (1.0 - S_v.array().square());
      MatrixXd dC_pre = dH.rightCols(hid).array() * (1.0 - C_v.array().square());

      double scale = cfg.lr / static_cast<double>(bsz);
      model.f_s.W -= scale * (dS_pre.transpose() * S);
      model.f_s.b -= scale * dS_pre.colwise().sum().transpose();
      model.f_c.W -= scale * (dC_pre.transpose() * C);
      model.f_c.b -= scale * dC_pre.colwise().sum().transpose();
      model.W_out -= scale * gW_out;
      model.b_out -= scale * gb_out;
      if (use_ccim) {
        model.ccim.W_h -= scale * gW_h;
        model.ccim.W_g -= scale * gW_g;
        if (use_lambda) {
          model.ccim.W_q -= scale * gW_q;
          model.ccim.W_k -= scale * gW_k;
          if (gW_t.size() > 0) model.ccim.W_t -= scale * gW_t;
        }
      }
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss))
      throw divergence_error("loss diverged at epoch " + std::to_string(epoch));
    trace.per_epoch.push_back(epoch_loss);
  }
  return trace;
}

ModelGrads reference_gradients(const BaselineModel& model,
                               const std::vector<Instance>& data,
                               double* loss_sum) {
  ModelGrads grads = zero_grads(model);
  double total = 0.0;
  for (const auto& inst : data) {
    check_label_mode(inst.labels, model.loss_mode);
    ForwardState st = model_forward(model, inst);
    VectorXd target = label_target(inst.labels, model.n_out);
    VectorXd d_logits;
    total += loss_and_grad(model.loss_mode, st.logits, target, d_logits);
    accumulate_backward(model, inst, st, d_logits, grads);
  }
  if (loss_sum) *loss_sum = total;
  return grads;
}

VectorXd predict_scores(const BaselineModel& model, const Instance& inst) {
  return model_forward(model, inst).logits;
}

EvalResult evaluate(const BaselineModel& model, const std::vector<Instance>& data,
                    const std::string& regime_tag) {
  if (data.empty()) throw argument_error("evaluation data is empty");
  for (const auto& inst : data) check_label_mode(inst.labels, model.loss_mode);

  EvalResult res;
  res.report.notes = regime_tag;
  const size_t n = data.size();

  if (model.loss_mode == LossMode::squared_error) {
    std::vector<std::array<double, 3>> pred, truth;
    for (const auto& inst : data) {
      VectorXd s = predict_scores(model, inst);
      pred.push_back({s(0), s(1), s(2)});
      const auto& v = std::get<core::VadLabel>(inst.labels.value);
      truth.push_back({v.valence, v.arousal, v.dominance});
    }
    res.report.aae = metrics::aae(pred, truth);
    return res;
  }

  const int k = model.n_out;
  std::vector<std::vector<double>> scores(n);
  std::vector<std::vector<bool>> truth(n, std::vector<bool>(k, false));
  for (size_t i = 0; i < n; ++i) {
    VectorXd s = predict_scores(model, data[i]);
    scores[i].assign(s.data(), s.data() + s.size());
    if (const auto* sl = std::get_if<core::SingleLabel>(&data[i].labels.value)) {
      truth[i][sl->index] = true;
    } else {
      const auto& m = std::get<core::MultiLabel>(data[i].labels.value);
      for (int c = 0; c < k; ++c) truth[i][c] = m.bits[c];
    }
  }

  // per-class AP over classes that have positives
  double ap_sum = 0.0;
  int ap_classes = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> col(n);
    std::vector<bool> t(n);
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      col[i] = scores[i][c];
      t[i] = truth[i][c];
      any = any || t[i];
    }
    if (!any) continue;
    double ap = metrics::average_precision(col, t);
    res.report.per_class_ap[c] = ap;
    ap_sum += ap;
    ++ap_classes;
  }
  if (ap_classes == 0) throw metric_error("no class has positive samples");
  res.report.map = ap_sum / ap_classes;

  std::vector<std::vector<bool>> pred(n, std::vector<bool>(k, false));
  if (model.loss_mode == LossMode::softmax_ce) {
    size_t correct = 0;
    for (size_t i = 0; i < n; ++i) {
      int arg = 0;
      for (int c = 1; c < k; ++c)
        if (scores[i][c] > scores[i][arg]) arg = c;
      pred[i][arg] = true;
      if (truth[i][arg]) ++correct;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  } else {
    // multi-label: binarize each class at its PR-equal threshold
    for (int c = 0; c < k; ++c) {
      std::vector<double> col(n);
      std::vector<bool> t(n);
      for (size_t i = 0; i < n; ++i) { col[i] = scores[i][c]; t[i] = truth[i][c]; }
      size_t pos = std::count(t.begin(), t.end(), true);
      double thr = (pos == 0 || pos == n) ? 0.0 : metrics::pr_equal_threshold(col, t);
      res.report.thresholds[c] = thr;
      for (size_t i = 0; i < n; ++i) pred[i][c] = col[i] >= thr;
    }
  }
  res.report.c_f1 = metrics::f1_label_based(pred, truth);
  res.report.o_f1 = metrics::f1_sample_based(pred, truth);

  double jc_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    std::set<int> sp, sg;
    for (int c = 0; c < k; ++c) {
      if (pred[i][c]) sp.insert(c);
      if (truth[i][c]) sg.insert(c);
    }
    jc_sum += metrics::jaccard_coefficient(sp, sg);
  }
  res.report.mean_jc = jc_sum / static_cast<double>(n);
  return res;
}

namespace {

constexpr char kModelMagic[8] = {'C', 'C', 'I', 'M', 'M', 'D', 'L', '1'};

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw corruption_error("truncated model file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_matrix(std::ostream& out, const MatrixXd& m) {
  put_u64(out, static_cast<uint64_t>(m.rows()));
  put_u64(out, static_cast<uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

MatrixXd get_matrix(std::istream& in) {
  auto rows = static_cast<Eigen::Index>(get_u64(in));
  auto cols = static_cast<Eigen::Index>(get_u64(in));
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in) throw corruption_error("truncated model matrix");
      m(r, c) = v;
    }
  return m;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  uint64_t len = get_u64(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw corruption_error("truncated model string");
  return s;
}

}  // namespace

void save_model(const BaselineModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write model file '" + path + "'");
  out.write(kModelMagic, 8);
  put_u64(out, static_cast<uint64_t>(model.loss_mode));
  put_u64(out, model.n_s_in);
  put_u64(out, model.n_c_in);
  put_u64(out, model.n_out);
  put_matrix(out, model.f_s.W);
  put_matrix(out, model.f_s.b);
  put_matrix(out, model.f_c.W);
  put_matrix(out, model.f_c.b);
  put_matrix(out, model.W_out);
  put_matrix(out, model.b_out);
  put_u64(out, model.ccim_enabled ? 1 : 0);
  if (model.ccim_enabled) {
    put_matrix(out, model.ccim.W_h);
    put_matrix(out, model.ccim.W_g);
    put_matrix(out, model.ccim.W_q);
    put_matrix(out, model.ccim.W_k);
    put_matrix(out, model.ccim.W_t);
    put_u64(out, model.ccim.variant == intervention::AttentionVariant::dot_product ? 0 : 1);
    put_u64(out, (model.ccim.use_lambda ? 1u : 0u) | (model.ccim.use_prior ? 2u : 0u) |
                     (model.ccim.scale_by_dn ? 4u : 0u));
    const auto& d = model.dict;
    put_u64(out, d.n);
    put_u64(out, d.dim);
    for (double v : d.prototypes) out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    for (double v : d.priors) out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    for (uint64_t c : d.member_counts) put_u64(out, c);
    put_u64(out, d.total);
    put_string(out, d.encoder_name);
    put_u64(out, d.seed);
  }
}

BaselineModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open model file '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw format_error("bad magic in model file '" + path + "'");
  BaselineModel model;
  model.loss_mode = static_cast<LossMode>(get_u64(in));
  model.n_s_in = static_cast<int>(get_u64(in));
  model.n_c_in = static_cast<int>(get_u64(in));
  model.n_out = static_cast<int>(get_u64(in));
  model.f_s.W = get_matrix(in);
  model.f_s.b = get_matrix(in).col(0);
  model.f_c.W = get_matrix(in);
  model.f_c.b = get_matrix(in).col(0);
  model.W_out = get_matrix(in);
  model.b_out = get_matrix(in).col(0);
  model.ccim_enabled = get_u64(in) != 0;
  if (model.ccim_enabled) {
    model.ccim.W_h = get_matrix(in);
    model.ccim.W_g = get_matrix(in);
    model.ccim.W_q = get_matrix(in);
    model.ccim.W_k = get_matrix(in);
    model.ccim.W_t = get_matrix(in).col(0);
    model.ccim.variant = get_u64(in) == 0 ? intervention::AttentionVariant::dot_product
                                          : intervention::AttentionVariant::additive;
    uint64_t flags = get_u64(in);
    model.ccim.use_lambda = flags & 1;
    model.ccim.use_prior = flags & 2;
    model.ccim.scale_by_dn = flags & 4;
    auto& d = model.dict;
    d.n = get_u64(in);
    d.dim = get_u64(in);
    d.prototypes.resize(d.n * d.dim);
    for (double& v : d.prototypes) {
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in) throw corruption_error("truncated model dictionary");
    }
    d.priors.resize(d.n);
    for (double& v : d.priors) in.read(reinterpret_cast<char*>(&v), sizeof(double));
    d.member_counts.resize(d.n);
    for (auto& c : d.member_counts) c = get_u64(in);
    d.total = get_u64(in);
    d.encoder_name = get_string(in);
    d.seed = get_u64(in);
    d.validate();
  }
  return model;
}

}  // namespace ccim::trainer
