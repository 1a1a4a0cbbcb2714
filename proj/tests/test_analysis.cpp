#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "latent_truth/analysis.hpp"
#include "latent_truth/data.hpp"
#include "latent_truth/error.hpp"
#include "latent_truth/numeric.hpp"
#include "latent_truth/rng.hpp"
#include "support.hpp"

using namespace latent_truth;

namespace {

// Table with individual votes; votes[i][j] is expert j's class for image i.
VoteTable per_annotator_table(const std::vector<std::vector<int>>& votes, std::size_t K) {
  std::vector<VoteRow> rows;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    VoteRow r;
    r.image_id = std::to_string(i + 1);
    r.counts.assign(K, 0);
    for (int v : votes[i]) ++r.counts[static_cast<std::size_t>(v)];
    r.per_annotator = votes[i];
    rows.push_back(std::move(r));
  }
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < K; ++k) labels.push_back(std::to_string(k + 1));
  return VoteTable(labels, static_cast<int>(votes.front().size()), std::move(rows));
}

PosteriorMatrix tau_of(std::initializer_list<std::initializer_list<double>> rows) {
  PosteriorMatrix p;
  p.tau = Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index k = 0;
    for (double v : r) p.tau(i, k++) = v;
    ++i;
  }
  return p;
}

SemConfig quick_sem() {
  SemConfig c;
  c.t_total = 120;
  c.t_burnin = 40;
  return c;
}

GroundTruthSpec expert_spec(std::size_t n, bool outlier, std::uint64_t seed) {
  const std::size_t K = 4;
  GroundTruthSpec s;
  s.pi_true = lt_test::random_pi(K, 1.4, seed);
  s.theta_true = lt_test::flat_theta(K, 0.8);
  for (std::size_t j = 0; j < 11; ++j) s.expert_thetas.push_back(lt_test::flat_theta(K, 0.8));
  if (outlier) s.expert_thetas[3] = Matrix::Constant(K, K, 1.0 / K);
  s.n_images = n;
  s.seed = seed;
  return s;
}

// Exact posterior under the per-expert generating model.
Matrix true_posterior(const GroundTruthSpec& spec, const VoteTable& table) {
  const auto K = static_cast<Eigen::Index>(spec.pi_true.size());
  Matrix tau(static_cast<Eigen::Index>(table.size()), K);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& votes = *table.row(i).per_annotator;
    for (Eigen::Index l = 0; l < K; ++l) {
      double p = spec.pi_true(l);
      for (std::size_t j = 0; j < votes.size(); ++j) p *= spec.expert_thetas[j](l, votes[j]);
      tau(static_cast<Eigen::Index>(i), l) = p;
    }
    tau.row(static_cast<Eigen::Index>(i)) /= tau.row(static_cast<Eigen::Index>(i)).sum();
  }
  return tau;
}

GroundTruthSpec city_spec(std::size_t n_per_group, bool shifted, std::uint64_t seed) {
  const std::size_t K = 4;
  GroundTruthSpec s;
  s.pi_true = Vector::Constant(K, 0.25);
  s.theta_true = lt_test::flat_theta(K, 0.8);
  s.n_annotators = 11;
  s.seed = seed;
  Matrix other = s.theta_true;
  if (shifted) {
    for (Eigen::Index l = 0; l < 3; ++l) {
      other(l, l) -= 0.15;
      other(l, 3) += 0.15;
    }
  }
  s.groups = {GroupSpec{"A", n_per_group, std::nullopt, std::nullopt},
              GroupSpec{"B", n_per_group, std::nullopt, other}};
  return s;
}

std::vector<std::size_t> identity_resample(std::size_t n, std::uint64_t) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

VarianceEstimate diag_estimate(const Vector& v, double var) {
  VarianceEstimate e;
  e.vartheta = v;
  e.within = Matrix::Identity(v.size(), v.size()) * var;
  e.between = Matrix::Zero(v.size(), v.size());
  e.cov = e.within;
  return e;
}

}  // namespace

TEST_CASE("expert lambda: hand arithmetic") {
  const auto one = per_annotator_table({{0, 1}}, 2);
  CHECK(expert_lambda(one, 0, tau_of({{0.5, 0.5}})).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const auto two = per_annotator_table({{0, 1}, {0, 0}}, 2);
  const auto tau = tau_of({{0.9, 0.1}, {0.2, 0.8}});
  const auto lam = expert_lambda(two, 0, tau);
  CHECK(lam.value == doctest::Approx(-(std::log(0.9) + std::log(0.2))).epsilon(1e-15));
  CHECK_FALSE(lam.floored);
  // Expert 2 voted (2, 1).
  CHECK(expert_lambda(two, 1, tau).value == doctest::Approx(-(std::log(0.1) + std::log(0.2))).epsilon(1e-15));

  // Restricting to the second image.
  const std::vector<std::size_t> rows{1};
  CHECK(expert_lambda(two, 0, tau, rows).value == doctest::Approx(-std::log(0.2)).epsilon(1e-15));
}

TEST_CASE("expert lambda: perfect agreement and the log floor") {
  const auto t = per_annotator_table({{0, 0}, {1, 1}, {2, 2}}, 3);
  PosteriorMatrix onehot{Matrix::Identity(3, 3)};
  const auto lam = expert_lambda(t, 1, onehot);
  CHECK(lam.value == 0.0);
  CHECK_FALSE(lam.floored);

  PosteriorMatrix wrong{Matrix::Identity(3, 3)};
  wrong.tau.row(2) << 1.0, 0.0, 0.0;
  const auto floored = expert_lambda(t, 0, wrong);
  CHECK(floored.floored);
  CHECK(floored.value == doctest::Approx(-std::log(kLogFloor)));
}

TEST_CASE("expert lambda is invariant to image order") {
  const auto g = generate(expert_spec(300, false, 3));
  const auto tau = posterior(g.table, ModelParams{lt_test::random_pi(4, 1.4, 3), lt_test::flat_theta(4, 0.8)});
  const auto order = lt_test::random_permutation(g.table.size(), 17);
  const auto shuffled = g.table.select(order);
  PosteriorMatrix moved{Matrix(tau.tau.rows(), tau.tau.cols())};
  for (std::size_t i = 0; i < order.size(); ++i) moved.tau.row(static_cast<Eigen::Index>(i)) = tau.tau.row(static_cast<Eigen::Index>(order[i]));
  for (std::size_t j = 0; j < 11; ++j) {
    CHECK(expert_lambda(shuffled, j, moved).value == doctest::Approx(expert_lambda(g.table, j, tau).value).epsilon(1e-12));
  }
}

TEST_CASE("two experts have identical deviation draws") {
  GroundTruthSpec s;
  s.pi_true = Vector::Constant(3, 1.0 / 3.0);
  s.theta_true = lt_test::flat_theta(3, 0.7);
  s.expert_thetas = {lt_test::flat_theta(3, 0.9), lt_test::flat_theta(3, 0.6)};
  s.n_images = 200;
  s.seed = 4;
  const auto g = generate(s);
  const ModelParams p{s.pi_true, s.theta_true};
  std::vector<PosteriorMatrix> taus{posterior(g.table, p), posterior(drop_annotator(g.table, 0), p)};
  ExpertBootstrapOptions o;
  o.b_reps = 40;
  o.randomized = true;
  const auto st = expert_bootstrap(g.table, taus, o);
  REQUIRE(st.d_boot.rows() == 2);
  REQUIRE(st.d_boot.cols() == 40);
  CHECK(st.d_boot.row(0) == st.d_boot.row(1));
  CHECK(st.randomized_d_boot->row(0) == st.randomized_d_boot->row(1));
  CHECK(st.d_boot.minCoeff() >= 0.0);

  // Reproducible given the seed, different for another seed.
  CHECK(expert_bootstrap(g.table, taus, o).d_boot == st.d_boot);
  o.seed = 2;
  CHECK(expert_bootstrap(g.table, taus, o).d_boot != st.d_boot);
}

TEST_CASE("observed lambda is the full-sample statistic") {
  const auto g = generate(expert_spec(150, false, 8));
  const ModelParams p{lt_test::random_pi(4, 1.4, 8), lt_test::flat_theta(4, 0.8)};
  std::vector<PosteriorMatrix> taus;
  for (std::size_t j = 0; j < 11; ++j) taus.push_back(posterior(drop_annotator(g.table, j), p));
  ExpertBootstrapOptions o;
  o.b_reps = 5;
  o.seed = 99;
  const auto st = expert_bootstrap(g.table, taus, o);
  for (std::size_t j = 0; j < 11; ++j) {
    CHECK(st.lambda_hat[j] == doctest::Approx(expert_lambda(g.table, j, taus[j]).value).epsilon(1e-12));
  }
  CHECK(st.d_boot.allFinite());
  CHECK(st.d_boot.minCoeff() >= 0.0);
}

TEST_CASE("expert bootstrap input checks") {
  const auto wide = lt_test::make_table({{2, 1}, {1, 2}});
  CHECK_THROWS_AS(leave_one_out_posteriors(wide, ModelParams::uniform(2), 0, quick_sem()), InputError);
  try {
    expert_analysis(wide, ExpertConfig{});
    FAIL("expected an input error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("long-format") != std::string::npos);
  }
  const auto single = per_annotator_table({{0}, {1}}, 2);
  CHECK_THROWS_AS(leave_one_out_posteriors(single, ModelParams::uniform(2), 0, quick_sem()), InputError);
  const auto t = per_annotator_table({{0, 1}, {1, 1}}, 2);
  std::vector<PosteriorMatrix> taus(2, PosteriorMatrix{Matrix::Constant(2, 2, 0.5)});
  ExpertBootstrapOptions o;
  o.b_reps = 0;
  CHECK_THROWS_AS(expert_bootstrap(t, taus, o), InputError);
  o.b_reps = 1;
  CHECK_THROWS_AS(expert_bootstrap(t, std::span(taus).first(1), o), InputError);
}

TEST_CASE("redundant expert leaves posterior argmax unchanged") {
  // Two experts who always agree with sharp classes.
  CounterRng rng(5);
  std::vector<std::vector<int>> votes;
  for (int i = 0; i < 400; ++i) {
    const int k = static_cast<int>(rng.below(3));
    votes.push_back({k, k});
  }
  const auto t = per_annotator_table(votes, 3);
  const auto ref = fit_and_label(t, quick_sem());
  const auto full = posterior(t, ref.params());
  for (std::size_t j = 0; j < 2; ++j) {
    const auto loo = leave_one_out_posteriors(t, ref.params(), j, quick_sem());
    for (Eigen::Index i = 0; i < full.tau.rows(); ++i) {
      Eigen::Index a, b;
      full.tau.row(i).maxCoeff(&a);
      loo.tau.row(i).maxCoeff(&b);
      CHECK(a == b);
    }
  }
}

TEST_CASE("dropping a uniform voter moves posteriors toward the truth") {
  const auto spec = expert_spec(2000, true, 11);
  const auto g = generate(spec);
  const auto truth = true_posterior(spec, g.table);
  const auto ref = fit_and_label(g.table, quick_sem());
  const auto full = posterior(g.table, ref.params());
  const auto loo = leave_one_out_posteriors(g.table, ref.params(), 3, quick_sem());
  const double mae_full = (full.tau - truth).cwiseAbs().mean();
  const double mae_loo = (loo.tau - truth).cwiseAbs().mean();
  CHECK(mae_loo < mae_full);
}

TEST_CASE("planted outlier stands out from observed and randomized baselines") {
  const auto g = generate(expert_spec(1500, true, 21));
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 100;
  c.randomized = true;
  c.seed = 3;
  const auto a = expert_analysis(g.table, c);
  const auto d = a.overall.mean_d();
  const auto r = a.overall.mean_randomized_d();
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (j != 3) CHECK(d[3] > d[j]);
  }
  CHECK(d[3] > 2.0 * r[3]);
}

TEST_CASE("homogeneous panel: no expert dominates") {
  const auto g = generate(expert_spec(1500, false, 22));
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 100;
  c.randomized = true;
  c.seed = 4;
  const auto a = expert_analysis(g.table, c);
  const auto d = a.overall.mean_d();
  const double med = median(d);
  for (double v : d) CHECK(v <= 2.0 * med);
}

TEST_CASE("homogeneous panel: randomized and observed D agree in distribution") {
  const auto g = generate(expert_spec(1500, false, 23));
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 100;
  c.randomized = true;
  c.seed = 5;
  const auto a = expert_analysis(g.table, c);
  const Matrix& obs = a.overall.d_boot;
  const Matrix& rnd = *a.overall.randomized_d_boot;
  std::vector<double> x(obs.data(), obs.data() + obs.size());
  std::vector<double> y(rnd.data(), rnd.data() + rnd.size());
  // Draws of one expert share its sample deviation, so the pooled values are
  // not independent; the per-expert means below are the sharper check.
  const auto ks = lt_test::ks_two_sample(x, y);
  MESSAGE("KS D = " << ks.statistic << ", p = " << ks.p);
  CHECK(ks.p > 0.01);
}

TEST_CASE("homogeneous panels: per-expert mean D matches the randomized baseline") {
  std::vector<double> obs, rnd;
  for (std::uint64_t r = 0; r < 6; ++r) {
    const auto g = generate(expert_spec(1500, false, 100 + r));
    ExpertConfig c;
    c.sem = quick_sem();
    c.b_reps = 50;
    c.randomized = true;
    c.seed = r;
    const auto a = expert_analysis(g.table, c);
    for (double v : a.overall.mean_d()) obs.push_back(v);
    for (double v : a.overall.mean_randomized_d()) rnd.push_back(v);
  }
  const auto ks = lt_test::ks_two_sample(obs, rnd);
  MESSAGE("KS D = " << ks.statistic << ", p = " << ks.p);
  CHECK(ks.p > 0.01);
}

TEST_CASE("per-city split restricts the sums") {
  auto spec = expert_spec(0, false, 31);
  spec.groups = {GroupSpec{"north", 300, std::nullopt, std::nullopt},
                 GroupSpec{"south", 200, std::nullopt, std::nullopt}};
  const auto g = generate(spec);
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 10;
  c.per_city = true;
  const auto a = expert_analysis(g.table, c);
  REQUIRE(a.per_city.size() == 2);
  CHECK(a.per_city[0].city == std::optional<std::string>("north"));
  for (std::size_t j = 0; j < 11; ++j) {
    CHECK(a.per_city[0].lambda_hat[j] + a.per_city[1].lambda_hat[j] ==
          doctest::Approx(a.overall.lambda_hat[j]).epsilon(1e-10));
  }
}

TEST_CASE("outer bootstrap with an identity resample reproduces the base analysis") {
  const auto g = generate(expert_spec(400, true, 41));
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 20;
  c.randomized = true;
  c.seed = 8;
  const auto base = expert_analysis(g.table, c);
  const auto outer = expert_bootstrap_outer(g.table, c, 1, identity_resample);
  REQUIRE(outer.size() == 1);
  const auto& o = outer[0].analysis;
  CHECK(o.overall.d_boot == base.overall.d_boot);
  CHECK(*o.overall.randomized_d_boot == *base.overall.randomized_d_boot);
  CHECK(o.overall.lambda_hat == base.overall.lambda_hat);
  CHECK(o.reference.params().theta == base.reference.params().theta);
}

TEST_CASE("outer bootstrap keeps the outlier on top in every draw") {
  const auto g = generate(expert_spec(1500, true, 42));
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 50;
  c.seed = 9;
  const auto draws = expert_bootstrap_outer(g.table, c, 3);
  REQUIRE(draws.size() == 3);
  for (const auto& d : draws) {
    const auto m = d.analysis.overall.mean_d();
    CHECK(std::max_element(m.begin(), m.end()) - m.begin() == 3);
  }
}

TEST_CASE("expert analysis does not depend on the job count") {
  const auto g = generate(expert_spec(300, true, 43));
  ExpertConfig c;
  c.sem = quick_sem();
  c.b_reps = 15;
  c.randomized = true;
  c.jobs = 1;
  const auto a = expert_bootstrap_outer(g.table, c, 2);
  c.jobs = 4;
  const auto b = expert_bootstrap_outer(g.table, c, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i].analysis.overall.d_boot == b[i].analysis.overall.d_boot);
    CHECK(*a[i].analysis.overall.randomized_d_boot == *b[i].analysis.overall.randomized_d_boot);
  }
}

TEST_CASE("city test: whitening and both test statistics") {
  // V = A A^T is full rank; T^T T must equal delta^T V^{-1} delta.
  Matrix A(3, 3);
  A << 0.02, 0.0, 0.0,
       0.01, 0.03, 0.0,
      -0.01, 0.005, 0.025;
  VarianceEstimate a, b;
  a.vartheta = Vector(3);
  a.vartheta << 0.7, 0.2, 0.1;
  b.vartheta = Vector(3);
  b.vartheta << 0.65, 0.22, 0.12;
  a.cov = A * A.transpose() * 0.5;
  b.cov = a.cov;
  const Vector delta = a.vartheta - b.vartheta;
  const Matrix V = a.cov + b.cov;
  const auto r = city_test(a, b);
  CHECK(r.rank == 3);
  CHECK(r.df == 2.0);
  CHECK(r.whitened.squaredNorm() == doctest::Approx(delta.dot(V.inverse() * delta)).epsilon(1e-9));
  // The symmetric root: V^{1/2} T = delta.
  Eigen::SelfAdjointEigenSolver<Matrix> es(V);
  const Matrix root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  CHECK(lt_test::max_abs(root * r.whitened - delta) < 1e-10);

  const double mean = r.whitened.mean();
  const double sd = std::sqrt((r.whitened.array() - mean).square().sum() / 2.0);
  CHECK(r.statistic == doctest::Approx(mean / (sd / std::sqrt(3.0))).epsilon(1e-10));

  // Bonferroni with V = I: p = 3 * erfc(max|delta| / sqrt 2), capped at 1.
  Vector x(3), y = Vector::Zero(3);
  x << 2.5, -0.3, 1.0;
  const auto bz = city_test(diag_estimate(x, 0.5), diag_estimate(y, 0.5), CityTestKind::bonferroni_z);
  CHECK(bz.p == doctest::Approx(3.0 * std::erfc(2.5 / std::sqrt(2.0))).epsilon(1e-10));
  x << 0.1, 0.0, 0.0;
  CHECK(city_test(diag_estimate(x, 0.5), diag_estimate(y, 0.5), CityTestKind::bonferroni_z).p == 1.0);
}

TEST_CASE("city test: self comparison, symmetry and rank errors") {
  const auto g = generate(city_spec(1500, true, 3));
  CityConfig c;
  c.sem = quick_sem();
  const auto rep = city_tests(g.table, c);
  REQUIRE(rep.fits.size() == 2);
  const auto self = city_test(rep.fits[0], rep.fits[0]);
  CHECK(self.p == 1.0);
  CHECK(self.whitened.isZero(0.0));
  const auto ab = city_test(rep.fits[0], rep.fits[1]);
  const auto ba = city_test(rep.fits[1], rep.fits[0]);
  CHECK(ab.p == ba.p);
  CHECK(ab.p == rep.find("A", "B")->original.p);
  CHECK(rep.find("B", "A") == rep.find("A", "B"));

  Vector v = Vector::Constant(4, 0.2);
  VarianceEstimate z;
  z.vartheta = v;
  z.cov = Matrix::Zero(4, 4);
  CHECK_THROWS_AS(city_test(z, z), NumericalError);
  z.cov(0, 0) = 1e-3;  // rank 1 leaves no degrees of freedom
  CHECK_THROWS_AS(city_test(z, z), NumericalError);
  VarianceEstimate small = diag_estimate(Vector::Zero(2), 1.0);
  CHECK_THROWS_AS(city_test(small, z), InputError);
}

TEST_CASE("city test is invariant to a common relabelling") {
  const auto g = generate(city_spec(1500, true, 5));
  CityConfig c;
  c.sem = quick_sem();
  const auto rep = city_tests(g.table, c);
  const double p = city_test(rep.fits[0], rep.fits[1]).p;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Permutation rho{lt_test::random_permutation(4, s)};
    const auto va = rubin_variance(apply(rho, rep.fits[0].trace));
    const auto vb = rubin_variance(apply(rho, rep.fits[1].trace));
    CHECK(city_test(va, vb).p == doctest::Approx(p).epsilon(1e-8));
  }
}

TEST_CASE("city test calibration and power at small scale") {
  int null_rejects = 0, power_rejects = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    CityConfig c;
    c.sem = quick_sem();
    c.seed = static_cast<std::uint64_t>(r);
    const auto same = generate(city_spec(2000, false, derive_seed(7, "null", static_cast<std::uint64_t>(r))));
    null_rejects += city_tests(same.table, c).pairs.at(0).reject;
    if (r < 10) {
      const auto diff = generate(city_spec(5000, true, derive_seed(7, "power", static_cast<std::uint64_t>(r))));
      power_rejects += city_tests(diff.table, c).pairs.at(0).reject;
    }
  }
  MESSAGE("null rejections " << null_rejects << "/" << reps);
  CHECK(null_rejects <= 8);
  CHECK(power_rejects == 10);
}

TEST_CASE("city bootstrap with an identity resample equals the original test") {
  const auto g = generate(city_spec(800, false, 9));
  CityConfig c;
  c.sem = quick_sem();
  c.seed = 4;
  const auto rep = city_tests(g.table, c);
  c.bootstrap = 1;
  const auto boot = city_test_bootstrap(g.table, "A", "B", c, identity_resample);
  CHECK(boot.min_p == rep.find("A", "B")->original.p);
  CHECK(boot.median_p == boot.min_p);
  CHECK(boot.p_values.size() == 1);

  c.bootstrap = 6;
  const auto r2 = city_tests(g.table, c);
  const auto& pr = *r2.find("A", "B");
  REQUIRE(pr.boot_p.size() == 6);
  CHECK(*pr.min_p == *std::min_element(pr.boot_p.begin(), pr.boot_p.end()));
  CHECK(*pr.median_p == median(pr.boot_p));
  for (double p : pr.boot_p) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(city_test_bootstrap(g.table, "A", "B", c).p_values == pr.boot_p);
  c.jobs = 3;
  CHECK(city_tests(g.table, c).find("A", "B")->boot_p == pr.boot_p);
}

TEST_CASE("city tests need at least two groups") {
  const auto one = lt_test::make_table({{2, 1}, {1, 2}}, {}, {"x", "x"});
  CHECK_THROWS_AS(city_tests(one, CityConfig{}), InputError);
  CHECK_THROWS_AS(city_tests(lt_test::make_table({{2, 1}}), CityConfig{}), InputError);
}

TEST_CASE("parallel_for covers every index and rethrows the first failure") {
  for (unsigned jobs : {1u, 2u, 5u}) {
    std::vector<int> hit(37, 0);
    parallel_for(hit.size(), jobs, [&](std::size_t i) { hit[i] += static_cast<int>(i); });
    for (std::size_t i = 0; i < hit.size(); ++i) CHECK(hit[i] == static_cast<int>(i));
  }
  std::atomic<int> ran{0};
  try {
    parallel_for(20, 4, [&](std::size_t i) {
      ++ran;
      if (i == 7 || i == 13) throw std::runtime_error("job " + std::to_string(i));
    });
    FAIL("expected a rethrow");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "job 7");
  }
  CHECK(ran == 20);
  parallel_for(0, 3, [](std::size_t) { FAIL("no jobs expected"); });
}
