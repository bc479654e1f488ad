#include "ccim/ccim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace ccim::intervention {

std::string to_string(AttentionVariant v) {
  return v == AttentionVariant::dot_product ? "dot" : "additive";
}

AttentionVariant variant_from_string(const std::string& s) {
  if (s == "dot" || s == "dot_product") return AttentionVariant::dot_product;
  if (s == "additive") return AttentionVariant::additive;
  throw argument_error("unknown attention variant '" + s + "'");
}

void CCIMParams::validate_against(const confounder::ConfounderDictionary& dict) const {
  if (static_cast<uint64_t>(d()) != dict.dim)
    throw shape_error("W_g column count does not match dictionary dim");
  if (W_k.cols() != d()) throw shape_error("W_k column count does not match dictionary dim");
  if (W_q.rows() != W_k.rows()) throw shape_error("W_q and W_k row counts differ");
  if (W_q.cols() != W_h.cols()) throw shape_error("W_q and W_h column counts differ");
  if (variant == AttentionVariant::additive && W_t.size() != W_q.rows())
    throw shape_error("W_t length does not match d_n");
  for (const MatrixXd* m : {&W_h, &W_g, &W_q, &W_k})
    if (!m->allFinite()) throw numeric_error("non-finite parameter entry");
  if (W_t.size() > 0 && !W_t.allFinite()) throw numeric_error("non-finite W_t entry");
}

namespace {

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                        double gain = 1.0) {
  double bound = gain / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

VectorXd stable_softmax(const VectorXd& scores) {
  VectorXd shifted = scores.array() - scores.maxCoeff();
  VectorXd ex = shifted.array().exp();
  return ex / ex.sum();
}

double dot_scale(const CCIMParams& p) {
  return std::sqrt(static_cast<double>(p.scale_by_dn ? p.d_n() : p.d()));
}

}  // namespace

CCIMParams init_params(Eigen::Index d_h, Eigen::Index d, Eigen::Index d_m,
                       Eigen::Index d_n, AttentionVariant variant, uint64_t seed,
                       double gain) {
  if (d_h < 1 || d < 1 || d_m < 1 || d_n < 1)
    throw argument_error("all CCIM dims must be >= 1");
  if (!(gain > 0.0) || !std::isfinite(gain))
    throw argument_error("init gain must be finite and > 0");
  std::mt19937_64 rng(seed);
  CCIMParams p;
  p.W_h = uniform_matrix(d_m, d_h, rng);
  p.W_g = uniform_matrix(d_m, d, rng, gain);
  p.W_q = uniform_matrix(d_n, d_h, rng, gain);
  p.W_k = uniform_matrix(d_n, d, rng, gain);
  p.W_t = uniform_matrix(d_n, 1, rng, gain).col(0);
  p.variant = variant;
  return p;
}

MatrixXd prototype_matrix(const confounder::ConfounderDictionary& dict) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      dict.prototypes.data(), static_cast<Eigen::Index>(dict.n),
      static_cast<Eigen::Index>(dict.dim));
}

VectorXd attention_dot(const VectorXd& h, const confounder::ConfounderDictionary& dict,
                       const CCIMParams& p, double score_offset) {
  if (p.variant != AttentionVariant::dot_product)
    throw argument_error("params are not configured for dot-product attention");
  if (h.size() != p.d_h()) throw shape_error("h length does not match W_q/W_h columns");
  p.validate_against(dict);
  MatrixXd Z = prototype_matrix(dict);
  VectorXd q = p.W_q * h;                       // d_n
  MatrixXd K = Z * p.W_k.transpose();           // N x d_n
  VectorXd scores = (K * q) / dot_scale(p);
  scores.array() += score_offset;
  return stable_softmax(scores);
}

VectorXd attention_additive(const VectorXd& h,
                            const confounder::ConfounderDictionary& dict,
                            const CCIMParams& p, double score_offset) {
  if (p.variant != AttentionVariant::additive)
    throw argument_error("params are not configured for additive attention");
  if (h.size() != p.d_h()) throw shape_error("h length does not match W_q/W_h columns");
  p.validate_against(dict);
  MatrixXd Z = prototype_matrix(dict);
  VectorXd q = p.W_q * h;                           // d_n
  MatrixXd U = (Z * p.W_k.transpose()).rowwise() + q.transpose();  // N x d_n
  VectorXd scores = U.array().tanh().matrix() * p.W_t;
  scores.array() += score_offset;
  return stable_softmax(scores);
}

VectorXd confounder_expectation(const VectorXd& lambda,
                                const confounder::ConfounderDictionary& dict,
                                bool use_lambda, bool use_prior) {
  if (use_lambda && lambda.size() != static_cast<Eigen::Index>(dict.n))
    throw shape_error("lambda length does not match dictionary size");
  MatrixXd Z = prototype_matrix(dict);
  VectorXd w = use_lambda ? lambda : VectorXd::Ones(static_cast<Eigen::Index>(dict.n));
  if (use_prior)
    w = w.cwiseProduct(Eigen::Map<const VectorXd>(dict.priors.data(),
                                                  static_cast<Eigen::Index>(dict.n)));
  return Z.transpose() * w;
}

CCIMOutput forward(const VectorXd& h, const confounder::ConfounderDictionary& dict,
                   const CCIMParams& p) {
  CCIMOutput out;
  if (p.use_lambda) {
    out.lambda = (p.variant == AttentionVariant::dot_product)
                     ? attention_dot(h, dict, p)
                     : attention_additive(h, dict, p);
  } else {
    p.validate_against(dict);
    if (h.size() != p.d_h()) throw shape_error("h length does not match W_h columns");
    out.lambda = VectorXd::Ones(static_cast<Eigen::Index>(dict.n));
  }
  out.expectation = confounder_expectation(out.lambda, dict, p.use_lambda, p.use_prior);
  out.vector = p.W_h * h + p.W_g * out.expectation;
  return out;
}

CCIMGrads backward(const VectorXd& h, const confounder::ConfounderDictionary& dict,
                   const CCIMParams& p, const VectorXd& d_out) {
  if (d_out.size() != p.d_m()) throw shape_error("d_out length does not match d_m");
  const Eigen::Index N = static_cast<Eigen::Index>(dict.n);
  MatrixXd Z = prototype_matrix(dict);
  VectorXd priors = Eigen::Map<const VectorXd>(dict.priors.data(), N);

  CCIMOutput out = forward(h, dict, p);

  CCIMGrads g;
  g.W_h = d_out * h.transpose();
  g.W_g = d_out * out.expectation.transpose();
  g.W_q = MatrixXd::Zero(p.d_n(), p.d_h());
  g.W_k = MatrixXd::Zero(p.d_n(), p.d());
  g.W_t = VectorXd::Zero(p.W_t.size());
  g.h = p.W_h.transpose() * d_out;

  if (!p.use_lambda) return g;  // expectation is constant in the parameters

  VectorXd d_expect = p.W_g.transpose() * d_out;            // d
  VectorXd weights = p.use_prior ? priors : VectorXd::Ones(N);
  // d loss / d lambda_i = d_expect . (weight_i * z_i)
  VectorXd d_lambda = Z * d_expect;
  d_lambda = d_lambda.cwiseProduct(weights);
  // softmax backward
  double inner = out.lambda.dot(d_lambda);
  VectorXd d_scores = out.lambda.cwiseProduct((d_lambda.array() - inner).matrix());

  VectorXd q = p.W_q * h;
  if (p.variant == AttentionVariant::dot_product) {
    double scale = dot_scale(p);
    MatrixXd K = Z * p.W_k.transpose();  // N x d_n
    VectorXd d_q = (K.transpose() * d_scores) / scale;
    g.W_q = d_q * h.transpose();
    // d k_i = d_score_i * q / scale ; accumulate into W_k via z_i outer products
    g.W_k = (q / scale) * (d_scores.transpose() * Z);
    g.h += p.W_q.transpose() * d_q;
  } else {
    MatrixXd U = (Z * p.W_k.transpose()).rowwise() + q.transpose();  // N x d_n
    MatrixXd T = U.array().tanh();
    g.W_t = T.transpose() * d_scores;
    // d u_i = d_score_i * W_t .* (1 - tanh(u_i)^2)
    MatrixXd dU = (d_scores * p.W_t.transpose()).cwiseProduct(
        (1.0 - T.array().square()).matrix());
    VectorXd d_q = dU.colwise().sum().transpose();
    g.W_q = d_q * h.transpose();
    g.W_k = dU.transpose() * Z;
    g.h += p.W_q.transpose() * d_q;
  }
  return g;
}

GradCheckReport check_gradients(const CCIMParams& p, const VectorXd& h,
                                const confounder::ConfounderDictionary& dict,
                                const std::function<double(const VectorXd&)>& loss,
                                const std::function<VectorXd(const VectorXd&)>& loss_grad) {
  const double step = 1e-6;
  CCIMOutput out = forward(h, dict, p);
  VectorXd d_out = loss_grad(out.vector);
  CCIMGrads analytic = backward(h, dict, p, d_out);

  GradCheckReport report;
  auto probe_matrix = [&](const MatrixXd& base, const MatrixXd& grads,
                          const std::string& tag, auto&& rebind) {
    CCIMParams q = p;
    VectorXd hh = h;
    MatrixXd& target = rebind(q, hh);
    (void)base;
    for (Eigen::Index r = 0; r < target.rows(); ++r)
      for (Eigen::Index c = 0; c < target.cols(); ++c) {
        double saved = target(r, c);
        target(r, c) = saved + step;
        double up = loss(forward(hh, dict, q).vector);
        target(r, c) = saved - step;
        double down = loss(forward(hh, dict, q).vector);
        target(r, c) = saved;
        double fd = (up - down) / (2.0 * step);
        double a = grads(r, c);
        if (!std::isfinite(fd) || !std::isfinite(a))
          throw numeric_error("non-finite gradient at " + tag);
        double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_parameter = tag + "(" + std::to_string(r) + "," +
                                   std::to_string(c) + ")";
        }
      }
  };

  probe_matrix(p.W_h, analytic.W_h, "W_h",
               [](CCIMParams& q, VectorXd&) -> MatrixXd& { return q.W_h; });
  probe_matrix(p.W_g, analytic.W_g, "W_g",
               [](CCIMParams& q, VectorXd&) -> MatrixXd& { return q.W_g; });
  probe_matrix(p.W_q, analytic.W_q, "W_q",
               [](CCIMParams& q, VectorXd&) -> MatrixXd& { return q.W_q; });
  probe_matrix(p.W_k, analytic.W_k, "W_k",
               [](CCIMParams& q, VectorXd&) -> MatrixXd& { return q.W_k; });

  {  // W_t and h as column vectors
    CCIMParams q = p;
    for (Eigen::Index i = 0; i < q.W_t.size(); ++i) {
      double saved = q.W_t(i);
      q.W_t(i) = saved + step;
      double up = loss(forward(h, dict, q).vector);
      q.W_t(i) = saved - step;
      double down = loss(forward(h, dict, q).vector);
      q.W_t(i) = saved;
      double fd = (up - down) / (2.0 * step);
      double a = analytic.W_t(i);
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = "W_t(" + std::to_string(i) + ")";
      }
    }
    VectorXd hh = h;
    for (Eigen::Index i = 0; i < hh.size(); ++i) {
      double saved = hh(i);
      hh(i) = saved + step;
      double up = loss(forward(hh, dict, p).vector);
      hh(i) = saved - step;
      double down = loss(forward(hh, dict, p).vector);
      hh(i) = saved;
      double fd = (up - down) / (2.0 * step);
      double a = analytic.h(i);
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = "h(" + std::to_string(i) + ")";
      }
    }
  }
  return report;
}

namespace {

constexpr char kParamMagic[8] = {'C', 'C', 'I', 'M', 'P', 'A', 'R', '1'};

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw corruption_error("truncated parameter file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_matrix(std::ostream& out, const MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

MatrixXd get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in) throw corruption_error("truncated parameter matrix");
      m(r, c) = v;
    }
  return m;
}

}  // namespace

void write_params(const CCIMParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write parameter file '" + path + "'");
  out.write(kParamMagic, 8);
  put_u64(out, static_cast<uint64_t>(p.d_m()));
  put_u64(out, static_cast<uint64_t>(p.d_h()));
  put_u64(out, static_cast<uint64_t>(p.d()));
  put_u64(out, static_cast<uint64_t>(p.d_n()));
  put_matrix(out, p.W_h);
  put_matrix(out, p.W_g);
  put_matrix(out, p.W_q);
  put_matrix(out, p.W_k);
  put_matrix(out, p.W_t);
  put_u64(out, p.variant == AttentionVariant::dot_product ? 0 : 1);
  put_u64(out, (p.use_lambda ? 1u : 0u) | (p.use_prior ? 2u : 0u) |
                   (p.scale_by_dn ? 4u : 0u));
}

CCIMParams read_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open parameter file '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kParamMagic, 8) != 0)
    throw format_error("bad magic in parameter file '" + path + "'");
  auto d_m = static_cast<Eigen::Index>(get_u64(in));
  auto d_h = static_cast<Eigen::Index>(get_u64(in));
  auto d = static_cast<Eigen::Index>(get_u64(in));
  auto d_n = static_cast<Eigen::Index>(get_u64(in));
  CCIMParams p;
  p.W_h = get_matrix(in, d_m, d_h);
  p.W_g = get_matrix(in, d_m, d);
  p.W_q = get_matrix(in, d_n, d_h);
  p.W_k = get_matrix(in, d_n, d);
  p.W_t = get_matrix(in, d_n, 1).col(0);
  p.variant = get_u64(in) == 0 ? AttentionVariant::dot_product
                               : AttentionVariant::additive;
  uint64_t flags = get_u64(in);
  p.use_lambda = flags & 1;
  p.use_prior = flags & 2;
  p.scale_by_dn = flags & 4;
  return p;
}

}  // namespace ccim::intervention
