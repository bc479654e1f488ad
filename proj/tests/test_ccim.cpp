#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "ccim/ccim.hpp"

using namespace ccim;
using namespace ccim::intervention;
using confounder::ConfounderDictionary;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ConfounderDictionary make_dict(size_t n, size_t dim, uint64_t seed) {
  ConfounderDictionary d;
  d.n = n;
  d.dim = dim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  d.prototypes.resize(n * dim);
  for (double& v : d.prototypes) v = u(rng);
  d.member_counts.assign(n, 1);
  d.member_counts[0] = n;  // nonuniform priors so prior bugs can't hide
  d.total = 0;
  for (auto c : d.member_counts) d.total += c;
  d.priors.resize(n);
  for (size_t i = 0; i < n; ++i)
    d.priors[i] = double(d.member_counts[i]) / double(d.total);
  d.encoder_name = "test";
  d.seed = seed;
  return d;
}

// scalar-by-scalar reimplementation of the dot attention
std::vector<double> naive_dot_lambda(const VectorXd& h, const ConfounderDictionary& d,
                                     const CCIMParams& p) {
  size_t dn = p.W_q.rows();
  std::vector<double> q(dn, 0.0);
  for (size_t r = 0; r < dn; ++r)
    for (Eigen::Index c = 0; c < h.size(); ++c) q[r] += p.W_q(r, c) * h(c);
  std::vector<double> scores(d.n, 0.0);
  for (size_t i = 0; i < d.n; ++i) {
    std::vector<double> k(dn, 0.0);
    for (size_t r = 0; r < dn; ++r)
      for (size_t c = 0; c < d.dim; ++c) k[r] += p.W_k(r, c) * d.prototype(i)[c];
    for (size_t r = 0; r < dn; ++r) scores[i] += q[r] * k[r];
    scores[i] /= std::sqrt(double(p.scale_by_dn ? dn : d.dim));
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double sum = 0;
  std::vector<double> lam(d.n);
  for (size_t i = 0; i < d.n; ++i) { lam[i] = std::exp(scores[i] - mx); sum += lam[i]; }
  for (double& v : lam) v /= sum;
  return lam;
}

std::vector<double> naive_additive_lambda(const VectorXd& h,
                                          const ConfounderDictionary& d,
                                          const CCIMParams& p) {
  size_t dn = p.W_q.rows();
  std::vector<double> scores(d.n, 0.0);
  for (size_t i = 0; i < d.n; ++i)
    for (size_t r = 0; r < dn; ++r) {
      double u = 0;
      for (Eigen::Index c = 0; c < h.size(); ++c) u += p.W_q(r, c) * h(c);
      for (size_t c = 0; c < d.dim; ++c) u += p.W_k(r, c) * d.prototype(i)[c];
      scores[i] += p.W_t(r) * std::tanh(u);
    }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double sum = 0;
  std::vector<double> lam(d.n);
  for (size_t i = 0; i < d.n; ++i) { lam[i] = std::exp(scores[i] - mx); sum += lam[i]; }
  for (double& v : lam) v /= sum;
  return lam;
}

std::vector<double> naive_expectation(const std::vector<double>& lam,
                                      const ConfounderDictionary& d,
                                      bool use_lambda, bool use_prior) {
  std::vector<double> e(d.dim, 0.0);
  for (size_t i = 0; i < d.n; ++i) {
    double w = (use_lambda ? lam[i] : 1.0) * (use_prior ? d.priors[i] : 1.0);
    for (size_t c = 0; c < d.dim; ++c) e[c] += w * d.prototype(i)[c];
  }
  return e;
}

VectorXd random_h(Eigen::Index n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h(i) = u(rng);
  return h;
}

}  // namespace

TEST_CASE("dot attention: zero W_q gives uniform lambda") {
  auto dict = make_dict(5, 4, 1);
  auto p = init_params(4, 4, 3, 6, AttentionVariant::dot_product, 2);
  p.W_q.setZero();
  auto lam = attention_dot(random_h(4, 3), dict, p);
  for (int i = 0; i < 5; ++i) CHECK(lam(i) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("dot attention: N = 1 collapses to lambda = (1)") {
  auto dict = make_dict(1, 4, 1);
  auto p = init_params(4, 4, 3, 6, AttentionVariant::dot_product, 2);
  auto lam = attention_dot(random_h(4, 3), dict, p);
  REQUIRE(lam.size() == 1);
  CHECK(lam(0) == 1.0);
}

TEST_CASE("dot attention: seed-11 config matches the naive-loop oracle") {
  auto dict = make_dict(3, 4, 11);
  auto p = init_params(4, 4, 2, 5, AttentionVariant::dot_product, 11);
  auto h = random_h(4, 11);
  auto lam = attention_dot(h, dict, p);
  auto want = naive_dot_lambda(h, dict, p);
  for (int i = 0; i < 3; ++i)
    CHECK(lam(i) == doctest::Approx(want[i]).epsilon(1e-12).scale(1));
}

TEST_CASE("additive attention: zero W_t gives uniform lambda") {
  auto dict = make_dict(4, 3, 2);
  auto p = init_params(5, 3, 2, 6, AttentionVariant::additive, 3);
  p.W_t.setZero();
  auto lam = attention_additive(random_h(5, 4), dict, p);
  for (int i = 0; i < 4; ++i) CHECK(lam(i) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("additive attention: identical prototypes get identical lambda") {
  auto dict = make_dict(3, 4, 5);
  for (size_t c = 0; c < dict.dim; ++c)
    dict.prototypes[1 * dict.dim + c] = dict.prototypes[2 * dict.dim + c];
  auto p = init_params(4, 4, 2, 5, AttentionVariant::additive, 6);
  auto lam = attention_additive(random_h(4, 6), dict, p);
  CHECK(lam(1) == doctest::Approx(lam(2)).epsilon(1e-14).scale(1));
}

TEST_CASE("additive attention: seed-11 config matches the naive-loop oracle") {
  auto dict = make_dict(3, 4, 11);
  auto p = init_params(4, 4, 2, 5, AttentionVariant::additive, 11);
  auto h = random_h(4, 11);
  auto lam = attention_additive(h, dict, p);
  auto want = naive_additive_lambda(h, dict, p);
  for (int i = 0; i < 3; ++i)
    CHECK(lam(i) == doctest::Approx(want[i]).epsilon(1e-12).scale(1));
}

TEST_CASE("lambda is on the simplex for both variants") {
  std::mt19937_64 rng(71);
  for (int t = 0; t < 40; ++t) {
    size_t n = 1 + rng() % 6, dim = 1 + rng() % 5;
    Eigen::Index dh = 1 + rng() % 6;
    auto dict = make_dict(n, dim, rng());
    for (auto variant : {AttentionVariant::dot_product, AttentionVariant::additive}) {
      auto p = init_params(dh, Eigen::Index(dim), 3, 4, variant, rng());
      auto h = random_h(dh, rng());
      VectorXd lam = variant == AttentionVariant::dot_product
                         ? attention_dot(h, dict, p)
                         : attention_additive(h, dict, p);
      double sum = 0;
      for (Eigen::Index i = 0; i < lam.size(); ++i) {
        CHECK(lam(i) >= 0.0);
        sum += lam(i);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("softmax shift invariance via the score offset hook") {
  auto dict = make_dict(4, 3, 8);
  auto pd = init_params(5, 3, 2, 6, AttentionVariant::dot_product, 9);
  auto h = random_h(5, 9);
  auto base = attention_dot(h, dict, pd);
  auto shifted = attention_dot(h, dict, pd, 123.456);
  for (int i = 0; i < 4; ++i)
    CHECK(base(i) == doctest::Approx(shifted(i)).epsilon(1e-12).scale(1));
  auto pa = init_params(5, 3, 2, 6, AttentionVariant::additive, 9);
  auto ab = attention_additive(h, dict, pa);
  auto as = attention_additive(h, dict, pa, -55.0);
  for (int i = 0; i < 4; ++i)
    CHECK(ab(i) == doctest::Approx(as(i)).epsilon(1e-12).scale(1));
}

TEST_CASE("expectation: forced cases") {
  auto dict = make_dict(2, 3, 12);
  dict.member_counts = {1, 1};
  dict.total = 2;
  dict.priors = {0.5, 0.5};
  VectorXd lam(2);
  lam << 1.0, 0.0;
  auto e = confounder_expectation(lam, dict, true, true);
  for (size_t c = 0; c < 3; ++c)
    CHECK(e(Eigen::Index(c)) == doctest::Approx(0.5 * dict.prototype(0)[c]));

  auto single = make_dict(1, 3, 13);
  VectorXd one(1);
  one << 1.0;
  auto es = confounder_expectation(one, single, true, true);
  for (size_t c = 0; c < 3; ++c)
    CHECK(es(Eigen::Index(c)) == single.prototype(0)[c]);  // N = 1 collapse, exact
}

TEST_CASE("expectation: seed-13 instance and all flag combinations match naive loops") {
  auto dict = make_dict(3, 4, 13);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 1);
  VectorXd lam(3);
  double sum = 0;
  for (int i = 0; i < 3; ++i) { lam(i) = u(rng); sum += lam(i); }
  lam /= sum;
  for (bool ul : {true, false})
    for (bool up : {true, false}) {
      auto got = confounder_expectation(lam, dict, ul, up);
      auto want = naive_expectation({lam(0), lam(1), lam(2)}, dict, ul, up);
      for (size_t c = 0; c < 4; ++c)
        CHECK(got(Eigen::Index(c)) == doctest::Approx(want[c]).epsilon(1e-12).scale(1));
    }
  // with both flags off the expectation is the plain prototype sum
  auto plain = confounder_expectation(lam, dict, false, false);
  for (size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (size_t i = 0; i < 3; ++i) s += dict.prototype(i)[c];
    CHECK(plain(Eigen::Index(c)) == doctest::Approx(s).epsilon(1e-12).scale(1));
  }
}

TEST_CASE("forward: degenerate weight cases") {
  auto dict = make_dict(3, 4, 17);
  auto p = init_params(5, 4, 3, 6, AttentionVariant::dot_product, 17);
  auto h = random_h(5, 17);

  auto zero_g = p;
  zero_g.W_g.setZero();
  auto out = forward(h, dict, zero_g);
  VectorXd lin = zero_g.W_h * h;
  for (int i = 0; i < 3; ++i)
    CHECK(out.vector(i) == doctest::Approx(lin(i)).epsilon(1e-12).scale(1));

  auto single = make_dict(1, 4, 18);
  auto ph = init_params(5, 4, 3, 6, AttentionVariant::dot_product, 18);
  ph.W_h.setZero();
  auto o1 = forward(h, single, ph);
  VectorXd want = ph.W_g * Eigen::Map<const VectorXd>(single.prototype(0), 4);
  for (int i = 0; i < 3; ++i)
    CHECK(o1.vector(i) == doctest::Approx(want(i)).epsilon(1e-12).scale(1));
}

TEST_CASE("forward: seed-17 composition equals the naive three-stage pipeline") {
  auto dict = make_dict(3, 8, 17);
  auto p = init_params(8, 8, 4, 6, AttentionVariant::dot_product, 17);
  auto h = random_h(8, 17);
  auto out = forward(h, dict, p);

  auto lam = naive_dot_lambda(h, dict, p);
  auto e = naive_expectation(lam, dict, true, true);
  for (int r = 0; r < 4; ++r) {
    double v = 0;
    for (int c = 0; c < 8; ++c) v += p.W_h(r, c) * h(c);
    for (size_t c = 0; c < 8; ++c) v += p.W_g(r, Eigen::Index(c)) * e[c];
    CHECK(out.vector(r) == doctest::Approx(v).epsilon(1e-12).scale(1));
  }
  for (int i = 0; i < 3; ++i)
    CHECK(out.lambda(i) == doctest::Approx(lam[i]).epsilon(1e-12).scale(1));
}

TEST_CASE("forward: prototype permutation equivariance") {
  auto dict = make_dict(4, 3, 19);
  auto p = init_params(5, 3, 3, 6, AttentionVariant::dot_product, 19);
  auto h = random_h(5, 19);
  auto base = forward(h, dict, p);

  std::vector<size_t> perm = {2, 0, 3, 1};
  ConfounderDictionary shuffled = dict;
  for (size_t i = 0; i < 4; ++i) {
    for (size_t c = 0; c < 3; ++c)
      shuffled.prototypes[i * 3 + c] = dict.prototype(perm[i])[c];
    shuffled.priors[i] = dict.priors[perm[i]];
    shuffled.member_counts[i] = dict.member_counts[perm[i]];
  }
  auto moved = forward(h, shuffled, p);
  for (int r = 0; r < 3; ++r)
    CHECK(moved.vector(r) == doctest::Approx(base.vector(r)).epsilon(1e-12).scale(1));
  for (size_t i = 0; i < 4; ++i)
    CHECK(moved.lambda(Eigen::Index(i)) ==
          doctest::Approx(base.lambda(Eigen::Index(perm[i]))).epsilon(1e-12).scale(1));
}

TEST_CASE("forward: output length is d_m regardless of N") {
  auto p = init_params(5, 3, 7, 6, AttentionVariant::dot_product, 20);
  auto h = random_h(5, 20);
  for (size_t n : {1, 2, 9}) {
    auto dict = make_dict(n, 3, 21);
    CHECK(forward(h, dict, p).vector.size() == 7);
  }
}

TEST_CASE("forward: flag semantics match closed forms") {
  auto dict = make_dict(3, 4, 22);
  auto p = init_params(5, 4, 3, 6, AttentionVariant::dot_product, 22);
  auto h = random_h(5, 22);

  auto no_lambda = p;
  no_lambda.use_lambda = false;
  auto out = forward(h, dict, no_lambda);
  for (size_t c = 0; c < 4; ++c) {
    double want = 0;
    for (size_t i = 0; i < 3; ++i) want += dict.prototype(i)[c] * dict.priors[i];
    CHECK(out.expectation(Eigen::Index(c)) ==
          doctest::Approx(want).epsilon(1e-12).scale(1));
  }

  auto no_prior = p;
  no_prior.use_prior = false;
  auto out2 = forward(h, dict, no_prior);
  auto lam = naive_dot_lambda(h, dict, p);
  for (size_t c = 0; c < 4; ++c) {
    double want = 0;
    for (size_t i = 0; i < 3; ++i) want += lam[i] * dict.prototype(i)[c];
    CHECK(out2.expectation(Eigen::Index(c)) ==
          doctest::Approx(want).epsilon(1e-12).scale(1));
  }
}

TEST_CASE("shapes: mismatches rejected") {
  auto dict = make_dict(3, 4, 23);
  auto p = init_params(5, 4, 3, 6, AttentionVariant::dot_product, 23);
  CHECK_THROWS_AS(forward(random_h(7, 1), dict, p), Error);       // wrong h
  auto bad_dict = make_dict(3, 6, 23);                            // wrong d
  CHECK_THROWS_AS(forward(random_h(5, 1), bad_dict, p), Error);
  CHECK_THROWS_AS(attention_additive(random_h(5, 1), dict, p), Error);  // wrong variant
}

TEST_CASE("gradients: quadratic loss on W_h is near-exact") {
  auto dict = make_dict(3, 4, 24);
  auto p = init_params(5, 4, 3, 6, AttentionVariant::dot_product, 24);
  auto h = random_h(5, 24);
  auto loss = [](const VectorXd& v) { return 0.5 * v.squaredNorm(); };
  auto grad = [](const VectorXd& v) { return v; };
  auto rep = check_gradients(p, h, dict, loss, grad);
  CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("gradients: constant loss gives zero gradients") {
  auto dict = make_dict(2, 3, 25);
  auto p = init_params(4, 3, 2, 5, AttentionVariant::additive, 25);
  auto g = backward(random_h(4, 25), dict, p, VectorXd::Zero(2));
  CHECK(g.W_h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.W_g.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.W_q.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.W_k.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradients: 20 random configurations per variant under 1e-5") {
  std::mt19937_64 rng(19);
  auto loss = [](const VectorXd& v) {
    double s = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::sin(v(i)) + 0.25 * v(i) * v(i);
    return s;
  };
  auto grad = [](const VectorXd& v) {
    VectorXd g(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) g(i) = std::cos(v(i)) + 0.5 * v(i);
    return g;
  };
  for (auto variant : {AttentionVariant::dot_product, AttentionVariant::additive}) {
    for (int t = 0; t < 20; ++t) {
      size_t n = 1 + rng() % 5, dim = 1 + rng() % 5;
      Eigen::Index dh = 1 + rng() % 6, dm = 1 + rng() % 4, dn = 1 + rng() % 6;
      auto dict = make_dict(n, dim, rng());
      auto p = init_params(dh, Eigen::Index(dim), dm, dn, variant, rng());
      p.use_lambda = rng() % 4 != 0;
      p.use_prior = rng() % 4 != 0;
      auto rep = check_gradients(p, random_h(dh, rng()), dict, loss, grad);
      INFO("variant " << to_string(variant) << " trial " << t << " worst "
                      << rep.worst_parameter);
      CHECK(rep.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("init: gain scales only the intervention path") {
  auto base = init_params(6, 5, 4, 3, AttentionVariant::dot_product, 42, 1.0);
  auto gained = init_params(6, 5, 4, 3, AttentionVariant::dot_product, 42, 16.0);
  CHECK(gained.W_h == base.W_h);
  CHECK(gained.W_g == 16.0 * base.W_g);
  CHECK(gained.W_q == 16.0 * base.W_q);
  CHECK(gained.W_k == 16.0 * base.W_k);
  CHECK(gained.W_t == 16.0 * base.W_t);
  CHECK_THROWS_AS(init_params(6, 5, 4, 3, AttentionVariant::dot_product, 42, 0.0),
                  Error);
}

TEST_CASE("params: checkpoint round trip") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "ccim_par_test";
  fs::create_directories(dir);
  auto path = (dir / "p.bin").string();

  auto p = init_params(5, 4, 3, 6, AttentionVariant::additive, 33);
  p.use_prior = false;
  p.scale_by_dn = true;
  write_params(p, path);
  auto back = read_params(path);
  CHECK(back.W_h == p.W_h);
  CHECK(back.W_g == p.W_g);
  CHECK(back.W_q == p.W_q);
  CHECK(back.W_k == p.W_k);
  CHECK(back.W_t == p.W_t);
  CHECK(back.variant == p.variant);
  CHECK(back.use_lambda == p.use_lambda);
  CHECK(back.use_prior == p.use_prior);
  CHECK(back.scale_by_dn == p.scale_by_dn);
  fs::remove_all(dir);
}
