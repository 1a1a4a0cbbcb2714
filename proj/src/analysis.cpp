#include "latent_truth/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <Eigen/SVD>
#include <spdlog/spdlog.h>

#include "latent_truth/error.hpp"
#include "latent_truth/numeric.hpp"
#include "latent_truth/rng.hpp"

namespace latent_truth {

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(jobs, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

std::vector<std::size_t> draw(const Resampler& resampler, std::size_t n, std::uint64_t key) {
  auto idx = resampler ? resampler(n, key) : resample_indices(n, key);
  if (idx.size() != n) throw InputError("resampler returned the wrong number of indices");
  for (auto i : idx) {
    if (i >= n) throw InputError("resampler returned an out-of-range index");
  }
  return idx;
}

GroupFit finish(SemTrace trace, Permutation perm, const RubinOptions& rubin, std::string name) {
  GroupFit fit;
  fit.name = std::move(name);
  fit.trace = apply(perm, trace);
  fit.relabel = std::move(perm);
  fit.variance = rubin_variance(fit.trace, rubin);
  return fit;
}

SemConfig with_seed(SemConfig sem, std::uint64_t seed) {
  sem.seed = seed;
  return sem;
}

struct LooResult {
  PosteriorMatrix tau;
  bool flagged = false;
};

LooResult leave_one_out(const VoteTable& table, const ModelParams& reference, std::size_t j,
                        const SemConfig& sem) {
  if (!table.has_per_annotator()) {
    throw InputError("leave-one-out analysis needs individual votes; provide long-format input "
                     "(image_id,annotator_id,vote,city)");
  }
  if (table.n_annotators() < 2) throw InputError("leave-one-out analysis needs at least 2 annotators");
  const VoteTable reduced = drop_annotator(table, j);
  const SemTrace trace = sem_fit(reduced, sem);
  const Permutation perm = match_to_reference(trace.final_params, reference);
  return {posterior(reduced, apply(perm, trace.final_params)), perm.flagged};
}

double neg_log(double p, bool& floored) {
  if (p <= 0.0) {
    floored = true;
    p = kLogFloor;
  }
  return -std::log(p);
}

ExpertAnalysis run_expert_analysis(const VoteTable& table, const ExpertConfig& config,
                                   const ModelParams* align_to) {
  if (!table.has_per_annotator()) {
    throw InputError("expert analysis needs individual votes; provide long-format input "
                     "(image_id,annotator_id,vote,city)");
  }
  const auto J = static_cast<std::size_t>(table.n_annotators());
  ExpertAnalysis out;
  const SemConfig fit_sem = with_seed(config.sem, derive_seed(config.seed, "experts/fit"));
  out.reference = align_to ? fit_and_align(table, fit_sem, *align_to)
                           : fit_and_label(table, fit_sem);
  out.relabel_flagged = out.reference.relabel.flagged;

  std::vector<LooResult> loo(J);
  parallel_for(J, config.jobs, [&](std::size_t j) {
    loo[j] = leave_one_out(table, out.reference.params(), j,
                           with_seed(config.sem, derive_seed(config.seed, "experts/loo", j)));
  });
  for (auto& r : loo) {
    out.relabel_flagged = out.relabel_flagged || r.flagged;
    out.loo.push_back(std::move(r.tau));
  }

  ExpertBootstrapOptions inner;
  inner.b_reps = config.b_reps;
  inner.randomized = config.randomized;
  inner.seed = derive_seed(config.seed, "experts/inner");
  inner.jobs = config.jobs;
  out.overall = expert_bootstrap(table, out.loo, inner);

  if (config.per_city) {
    if (!table.has_groups()) throw InputError("per-city split needs a city column");
    for (const auto& city : table.groups()) {
      ExpertBootstrapOptions opt = inner;
      opt.seed = derive_seed(config.seed, "experts/inner/city/" + city);
      opt.city = city;
      for (std::size_t i = 0; i < table.size(); ++i) {
        if (table.row(i).group == city) opt.rows.push_back(i);
      }
      out.per_city.push_back(expert_bootstrap(table, out.loo, opt));
    }
  }
  return out;
}

// Fit plus outer-bootstrap variances for a list of groups.
struct CityFits {
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  std::vector<GroupFit> fits;
  // boot[g][b]: variance of draw b (empty when the refit failed).
  std::vector<std::vector<std::optional<VarianceEstimate>>> boot;
  std::vector<std::vector<char>> boot_flagged;  // char: written concurrently
};

CityFits fit_cities(const VoteTable& table, const std::vector<std::string>& names,
                    const CityConfig& config, const Resampler& resampler) {
  CityFits out;
  out.names = names;
  const std::size_t S = names.size();
  std::vector<VoteTable> tables;
  for (const auto& name : names) {
    tables.push_back(subset_group(table, name));
    if (tables.back().empty()) throw InputError("group '" + name + "' has no images");
    if (tables.back().size() < table.n_classes()) {
      spdlog::warn("group '{}' has only {} images for K={} classes", name, tables.back().size(),
                   table.n_classes());
    }
    out.sizes.push_back(tables.back().size());
  }
  auto sem_for = [&](std::size_t g) {
    return with_seed(config.sem, derive_seed(config.seed, "cities/sem/" + names[g]));
  };

  out.fits.resize(S);
  parallel_for(S, config.jobs, [&](std::size_t g) {
    out.fits[g] = fit_and_label(tables[g], sem_for(g), config.rubin, names[g]);
  });

  const auto B = static_cast<std::size_t>(std::max(config.bootstrap, 0));
  out.boot.assign(S, std::vector<std::optional<VarianceEstimate>>(B));
  out.boot_flagged.assign(S, std::vector<char>(B, 0));
  parallel_for(S * B, config.jobs, [&](std::size_t job) {
    const std::size_t g = job / B;
    const std::size_t b = job % B;
    const auto idx = draw(resampler, tables[g].size(),
                          derive_seed(config.seed, "cities/resample/" + names[g], b));
    try {
      auto fit = fit_and_align(tables[g].select(idx), sem_for(g), out.fits[g].params(),
                               config.rubin, names[g]);
      out.boot_flagged[g][b] = fit.relabel.flagged;
      out.boot[g][b] = std::move(fit.variance);
    } catch (const NumericalError& e) {
      spdlog::warn("bootstrap draw {} of group '{}' failed: {}", b + 1, names[g], e.what());
    } catch (const DegenerateModelError& e) {
      spdlog::warn("bootstrap draw {} of group '{}' failed: {}", b + 1, names[g], e.what());
    }
  });
  return out;
}

PairResult test_pair(const CityFits& fits, std::size_t ga, std::size_t gb, const CityConfig& config) {
  PairResult r;
  r.a = fits.names[ga];
  r.b = fits.names[gb];
  r.original = city_test(fits.fits[ga], fits.fits[gb], config.kind);
  r.reject = r.original.p < config.level;
  const std::size_t B = fits.boot[ga].size();
  for (std::size_t b = 0; b < B; ++b) {
    const auto& va = fits.boot[ga][b];
    const auto& vb = fits.boot[gb][b];
    if (!va || !vb) continue;
    if (fits.boot_flagged[ga][b] || fits.boot_flagged[gb][b]) ++r.boot_flagged;
    try {
      r.boot_p.push_back(city_test(*va, *vb, config.kind).p);
    } catch (const NumericalError& e) {
      spdlog::warn("bootstrap draw {} for {} vs {}: {}", b + 1, r.a, r.b, e.what());
    }
  }
  if (!r.boot_p.empty()) {
    r.min_p = *std::min_element(r.boot_p.begin(), r.boot_p.end());
    r.median_p = median(r.boot_p);
  } else if (B > 0) {
    spdlog::warn("no usable bootstrap draws for {} vs {}", r.a, r.b);
  }
  return r;
}

}  // namespace

// ---- Fitting pipeline --------------------------------------------------------

GroupFit fit_and_label(const VoteTable& table, const SemConfig& sem, const RubinOptions& rubin,
                       std::string name) {
  SemTrace trace = sem_fit(table, sem);
  const auto freqs = table.vote_frequencies();
  Permutation perm = match_to_labels(trace.final_params, freqs);
  if (perm.flagged) spdlog::warn("relabelling{} needed a fallback", name.empty() ? "" : " of " + name);
  return finish(std::move(trace), std::move(perm), rubin, std::move(name));
}

GroupFit fit_and_align(const VoteTable& table, const SemConfig& sem, const ModelParams& reference,
                       const RubinOptions& rubin, std::string name) {
  SemTrace trace = sem_fit(table, sem);
  Permutation perm = match_to_reference(trace.final_params, reference);
  return finish(std::move(trace), std::move(perm), rubin, std::move(name));
}

// ---- Expert heterogeneity ----------------------------------------------------

PosteriorMatrix leave_one_out_posteriors(const VoteTable& table, const ModelParams& reference,
                                         std::size_t j, const SemConfig& sem) {
  return leave_one_out(table, reference, j, sem).tau;
}

LambdaValue expert_lambda(const VoteTable& table, std::size_t j, const PosteriorMatrix& tau_minus_j,
                          std::span<const std::size_t> rows) {
  if (!table.has_per_annotator()) throw InputError("expert_lambda needs individual votes");
  if (j >= static_cast<std::size_t>(table.n_annotators())) throw InputError("expert index out of range");
  if (static_cast<std::size_t>(tau_minus_j.tau.rows()) != table.size()) {
    throw InputError("posterior rows do not match the vote table");
  }
  LambdaValue out;
  auto term = [&](std::size_t i) {
    const int v = (*table.row(i).per_annotator)[j];
    return neg_log(tau_minus_j.tau(static_cast<Eigen::Index>(i), v), out.floored);
  };
  std::vector<double> terms;
  if (rows.empty()) {
    terms.resize(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) terms[i] = term(i);
  } else {
    for (auto i : rows) terms.push_back(term(i));
  }
  out.value = pairwise_sum(terms);
  return out;
}

std::vector<double> ExpertStat::mean_d() const {
  std::vector<double> m(static_cast<std::size_t>(d_boot.rows()));
  for (Eigen::Index j = 0; j < d_boot.rows(); ++j) m[static_cast<std::size_t>(j)] = d_boot.row(j).mean();
  return m;
}

std::vector<double> ExpertStat::mean_randomized_d() const {
  if (!randomized_d_boot) return {};
  std::vector<double> m(static_cast<std::size_t>(randomized_d_boot->rows()));
  for (Eigen::Index j = 0; j < randomized_d_boot->rows(); ++j) {
    m[static_cast<std::size_t>(j)] = randomized_d_boot->row(j).mean();
  }
  return m;
}

ExpertStat expert_bootstrap(const VoteTable& table, std::span<const PosteriorMatrix> taus_minus_j,
                            const ExpertBootstrapOptions& options) {
  if (options.b_reps < 1) throw InputError("expert bootstrap needs B >= 1");
  if (!table.has_per_annotator()) throw InputError("expert bootstrap needs individual votes");
  const auto J = static_cast<std::size_t>(table.n_annotators());
  if (J < 2) throw InputError("expert bootstrap needs at least 2 annotators");
  if (taus_minus_j.size() != J) throw InputError("need one leave-one-out posterior per expert");
  for (const auto& t : taus_minus_j) {
    if (static_cast<std::size_t>(t.tau.rows()) != table.size() ||
        static_cast<std::size_t>(t.tau.cols()) != table.n_classes()) {
      throw InputError("leave-one-out posterior has the wrong shape");
    }
  }

  std::vector<std::size_t> rows = options.rows;
  if (rows.empty()) {
    rows.resize(table.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  }
  const std::size_t m = rows.size();
  if (m == 0) throw InputError("expert bootstrap needs at least one image");

  ExpertStat out;
  out.city = options.city;
  out.lambda_hat.resize(J);
  out.lambda_floored.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto lv = expert_lambda(table, j, taus_minus_j[j], rows);
    out.lambda_hat[j] = lv.value;
    out.lambda_floored[j] = lv.floored;
    if (lv.floored) spdlog::warn("expert {}: zero posterior at an observed vote, floored at {}", j + 1, kLogFloor);
  }

  // -log tau_{(-j)}(row, k) for every selected row, expert and class.
  const std::size_t K = table.n_classes();
  std::vector<double> nll(m * J * K);
  bool floored = false;
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t k = 0; k < K; ++k) {
        nll[(s * J + j) * K + k] = neg_log(
            taus_minus_j[j].tau(static_cast<Eigen::Index>(rows[s]), static_cast<Eigen::Index>(k)), floored);
      }
    }
  }
  auto vote = [&](std::size_t s, std::size_t j) {
    return static_cast<std::size_t>((*table.row(rows[s]).per_annotator)[j]);
  };

  const auto B = static_cast<std::size_t>(options.b_reps);
  out.d_boot = Matrix::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(B));
  if (options.randomized) out.randomized_d_boot = Matrix::Zero(out.d_boot.rows(), out.d_boot.cols());

  auto to_d = [J](const std::vector<double>& lambda, Matrix& dest, std::size_t b) {
    for (std::size_t j = 0; j < J; ++j) {
      // Summed directly rather than total - lambda_j, so J = 2 is exactly symmetric.
      double others = 0.0;
      for (std::size_t l = 0; l < J; ++l) {
        if (l != j) others += lambda[l];
      }
      others /= static_cast<double>(J - 1);
      dest(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)) = std::fabs(lambda[j] - others);
    }
  };

  // Randomized experts: one uniform permutation per image, addressed by the
  // image's row so a resampled image keeps it. Slot j takes expert rho(j)'s
  // whole term (vote and that expert's own leave-one-out posterior), which
  // keeps the vote out of the posterior it is scored against.
  std::vector<double> shuffled;
  if (options.randomized) {
    shuffled.resize(m * J);
    for (std::size_t s = 0; s < m; ++s) {
      CounterRng rng(derive_seed(options.seed, "experts/randomize", rows[s]));
      const auto rho = rng.permutation(J);
      for (std::size_t j = 0; j < J; ++j) shuffled[s * J + j] = nll[(s * J + rho[j]) * K + vote(s, rho[j])];
    }
  }

  parallel_for(B, options.jobs, [&](std::size_t b) {
    const auto idx = resample_indices(m, derive_seed(options.seed, "experts/resample", b));
    std::vector<double> lambda(J, 0.0);
    for (auto s : idx) {
      for (std::size_t j = 0; j < J; ++j) lambda[j] += nll[(s * J + j) * K + vote(s, j)];
    }
    to_d(lambda, out.d_boot, b);
    if (options.randomized) {
      std::fill(lambda.begin(), lambda.end(), 0.0);
      for (auto s : idx) {
        for (std::size_t j = 0; j < J; ++j) lambda[j] += shuffled[s * J + j];
      }
      to_d(lambda, *out.randomized_d_boot, b);
    }
  });
  return out;
}

ExpertAnalysis expert_analysis(const VoteTable& table, const ExpertConfig& config) {
  return run_expert_analysis(table, config, nullptr);
}

std::vector<OuterDraw> expert_bootstrap_outer(const VoteTable& table, const ExpertConfig& config,
                                              int b_outer, const Resampler& resampler) {
  if (b_outer < 1) throw InputError("outer bootstrap needs at least one draw");
  const GroupFit original =
      fit_and_label(table, with_seed(config.sem, derive_seed(config.seed, "experts/fit")));
  const auto B = static_cast<std::size_t>(b_outer);
  std::vector<OuterDraw> draws(B);
  ExpertConfig inner = config;
  inner.jobs = 1;
  parallel_for(B, config.jobs, [&](std::size_t b) {
    const auto idx = draw(resampler, table.size(), derive_seed(config.seed, "experts/outer/resample", b));
    draws[b].b = b;
    draws[b].analysis = run_expert_analysis(table.select(idx), inner, &original.params());
    draws[b].relabel_flagged = draws[b].analysis.relabel_flagged;
  });
  for (const auto& d : draws) {
    if (d.relabel_flagged) spdlog::warn("outer draw {}: relabelling needed a fallback", d.b + 1);
  }
  return draws;
}

// ---- City tests --------------------------------------------------------------

CityTestResult city_test(const VarianceEstimate& a, const VarianceEstimate& b, CityTestKind kind) {
  if (a.vartheta.size() != b.vartheta.size()) throw InputError("city test needs fits with the same K");
  const Vector delta = a.vartheta - b.vartheta;
  const Matrix V = a.cov + b.cov;
  const Eigen::Index m = delta.size();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeFullU);
  const Vector s = svd.singularValues();
  const double s_max = m > 0 ? s(0) : 0.0;
  Eigen::Index r = 0;
  while (r < m && s_max > 0.0 && s(r) > kSvdRelativeCutoff * s_max) ++r;
  CityTestResult out;
  out.rank = static_cast<std::size_t>(r);
  if (r < 2) {
    throw NumericalError("city test: covariance of the difference has rank " + std::to_string(r) +
                         ", at least 2 needed");
  }
  const Matrix U = svd.matrixU().leftCols(r);
  const Vector inv_root = s.head(r).cwiseSqrt().cwiseInverse();
  out.whitened = U * (inv_root.asDiagonal() * (U.transpose() * delta));

  if (delta.isZero(0.0)) {
    out.p = 1.0;
    out.statistic = 0.0;
    out.df = kind == CityTestKind::pooled_t ? static_cast<double>(r - 1) : 0.0;
    return out;
  }

  const auto& T = out.whitened;
  if (kind == CityTestKind::bonferroni_z) {
    out.statistic = T.cwiseAbs().maxCoeff();
    out.p = std::min(1.0, static_cast<double>(r) * normal_two_sided_p(out.statistic));
    return out;
  }
  const double mean = T.mean();
  const double ss = (T.array() - mean).square().sum();
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  out.df = static_cast<double>(r - 1);
  if (sd == 0.0) {
    out.statistic = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.p = mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.statistic = mean / (sd / std::sqrt(static_cast<double>(m)));
  out.p = student_t_two_sided_p(out.statistic, out.df);
  return out;
}

CityTestResult city_test(const GroupFit& a, const GroupFit& b, CityTestKind kind) {
  return city_test(a.variance, b.variance, kind);
}

const PairResult* TestReport::find(const std::string& a, const std::string& b) const {
  for (const auto& p : pairs) {
    if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return &p;
  }
  return nullptr;
}

TestReport city_tests(const VoteTable& table, const CityConfig& config, const Resampler& resampler) {
  if (!table.has_groups()) throw InputError("city tests need a city column");
  const auto names = table.groups();
  if (names.size() < 2) throw InputError("city tests need at least 2 groups, found " + std::to_string(names.size()));
  auto fits = fit_cities(table, names, config, resampler);

  TestReport report;
  report.groups = names;
  report.group_sizes = fits.sizes;
  report.level = config.level;
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) report.pairs.push_back(test_pair(fits, a, b, config));
  }
  report.fits = std::move(fits.fits);
  return report;
}

CityBootstrapResult city_test_bootstrap(const VoteTable& table, const std::string& group_a,
                                        const std::string& group_b, const CityConfig& config,
                                        const Resampler& resampler) {
  if (config.bootstrap < 1) throw InputError("city bootstrap needs B >= 1");
  if (group_a == group_b) throw InputError("city bootstrap needs two different groups");
  const auto fits = fit_cities(table, {group_a, group_b}, config, resampler);
  const auto pair = test_pair(fits, 0, 1, config);
  CityBootstrapResult out;
  out.p_values = pair.boot_p;
  out.flagged = pair.boot_flagged;
  if (!pair.min_p) throw NumericalError("every bootstrap draw failed for " + group_a + " vs " + group_b);
  out.min_p = *pair.min_p;
  out.median_p = *pair.median_p;
  return out;
}

}  // namespace latent_truth
