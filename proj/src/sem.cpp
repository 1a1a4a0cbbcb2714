#include "latent_truth/sem.hpp"

#include <string>

#include "latent_truth/error.hpp"
#include "latent_truth/rng.hpp"

namespace latent_truth {

void SemConfig::validate() const {
  if (t_total < 1) throw InputError("SEM needs T >= 1");
  if (t_burnin < 0 || t_burnin >= t_total) throw InputError("SEM needs 0 <= burn-in < T");
  if (smoothing < 0.0 || init_smoothing < 0.0) throw InputError("smoothing must be >= 0");
  if (init == InitKind::provided && !initial) throw InputError("provided init without parameters");
}

std::size_t SemTrace::zero_class_events() const {
  std::size_t n = 0;
  for (const auto& it : iterations) {
    for (bool z : it.zero_class) n += z ? 1 : 0;
  }
  return n;
}

ModelParams mean_params(const std::vector<SemIteration>& iterations, std::size_t first) {
  if (first >= iterations.size()) throw InputError("no iterations to average");
  ModelParams m{Vector::Zero(iterations[first].params.pi.size()),
                Matrix::Zero(iterations[first].params.theta.rows(),
                             iterations[first].params.theta.cols())};
  for (std::size_t t = first; t < iterations.size(); ++t) {
    m.pi += iterations[t].params.pi;
    m.theta += iterations[t].params.theta;
  }
  const double n = static_cast<double>(iterations.size() - first);
  m.pi /= n;
  m.theta /= n;
  return m;
}

Vector vartheta_of(const Matrix& theta) {
  const auto K = theta.rows();
  Vector v(K * (K - 1));
  for (Eigen::Index l = 0; l < K; ++l) {
    for (Eigen::Index k = 0; k + 1 < K; ++k) v(l * (K - 1) + k) = theta(l, k);
  }
  return v;
}

SemTrace sem_fit(const VoteTable& table, const SemConfig& config) {
  config.validate();
  if (table.empty()) throw InputError("SEM needs a non-empty vote table");
  const std::size_t K = table.n_classes();
  if (K < 2) throw InputError("SEM needs at least K=2 classes");
  const auto Ki = static_cast<Eigen::Index>(K);
  const std::size_t n = table.size();
  const int J = table.n_annotators();
  const auto patterns = PatternIndex::build(table);
  const auto P = static_cast<Eigen::Index>(patterns.n_patterns());

  SemTrace trace;
  trace.n_images = n;
  trace.n_annotators = J;
  trace.t_burnin = config.t_burnin;

  std::vector<int> effective(K, 0);
  switch (config.init) {
    case InitKind::provided:
      config.initial->validate();
      if (config.initial->n_classes() != K) throw InputError("initial parameters have wrong K");
      trace.initial = *config.initial;
      break;
    case InitKind::majority_vote:
    case InitKind::random: {
      std::vector<int> z(n);
      CounterRng rng(derive_seed(config.seed, "sem/init"));
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = config.init == InitKind::majority_vote
                   ? static_cast<int>(majority_class(table.row(i)))
                   : static_cast<int>(rng.below(K));
      }
      MleOptions opts;
      opts.smoothing = config.init_smoothing;
      auto init = complete_data_mle(table, z, opts);
      trace.initial = std::move(init.params);
      effective = init.class_counts;
      break;
    }
  }
  trace.initial_loglik = log_likelihood(patterns, trace.initial).value;

  ModelParams current = trace.initial;
  int degenerate_run = 0;
  std::vector<int> z(n);
  for (int t = 1; t <= config.t_total; ++t) {
    const auto pp = pattern_posterior(patterns, current);
    for (std::size_t p = 0; p < patterns.n_patterns(); ++p) {
      if (pp.impossible[p]) {
        throw NumericalError("SEM iteration " + std::to_string(t) + ": image " +
                             table.row(patterns.first_row[p]).image_id +
                             " has zero probability under every component");
      }
    }

    const std::uint64_t key = derive_seed(config.seed, "sem/draw", static_cast<std::uint64_t>(t));
    Matrix assigned = Matrix::Zero(P, Ki);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = static_cast<Eigen::Index>(patterns.row_pattern[i]);
      const double u = CounterRng::uniform_at(key, i);
      const auto l = categorical_from_uniform({pp.tau.row(p).data(), K}, u);
      z[i] = static_cast<int>(l);
      assigned(p, static_cast<Eigen::Index>(l)) += 1.0;
    }

    MleOptions opts;
    opts.smoothing = config.smoothing;
    opts.fallback = &current;
    auto mle = complete_data_mle(patterns, J, assigned, opts);

    std::size_t occupied = 0;
    for (std::size_t l = 0; l < K; ++l) {
      if (mle.class_counts[l] > 0) {
        ++occupied;
        effective[l] = mle.class_counts[l];
      }
    }
    degenerate_run = occupied <= 1 ? degenerate_run + 1 : 0;
    if (degenerate_run >= 3) {
      throw DegenerateModelError("SEM chain put every image in one class for 3 consecutive "
                                 "iterations (t=" + std::to_string(t) + ")");
    }

    SemIteration it;
    it.loglik = log_likelihood(patterns, mle.params).value;
    it.params = std::move(mle.params);
    it.class_counts = std::move(mle.class_counts);
    it.effective_counts = effective;
    it.zero_class = std::move(mle.zero_class);
    current = it.params;
    trace.iterations.push_back(std::move(it));
    if (config.store_z) trace.z_per_iter.push_back(z);
  }

  trace.final_params = mean_params(trace.iterations, static_cast<std::size_t>(config.t_burnin));
  return trace;
}

VarianceEstimate rubin_variance(const SemTrace& trace, const RubinOptions& options) {
  const std::size_t T = trace.iterations.size();
  const auto t0 = static_cast<std::size_t>(trace.t_burnin);
  if (T < t0 + 2) throw InputError("Rubin variance needs at least 2 post-burn-in iterations");
  const auto K = static_cast<Eigen::Index>(trace.n_classes());
  const Eigen::Index d = K - 1;
  const Eigen::Index m = K * d;
  const double scale = options.annotator_scaled ? static_cast<double>(trace.n_annotators) : 1.0;

  VarianceEstimate out;
  out.vartheta = vartheta_of(trace.final_params.theta);
  out.within = Matrix::Zero(m, m);
  out.between = Matrix::Zero(m, m);
  out.flagged_blocks.assign(static_cast<std::size_t>(K), false);

  for (std::size_t t = t0; t < T; ++t) {
    const auto& it = trace.iterations[t];
    for (Eigen::Index l = 0; l < K; ++l) {
      const int count = it.effective_counts[static_cast<std::size_t>(l)];
      if (it.zero_class[static_cast<std::size_t>(l)]) out.flagged_blocks[static_cast<std::size_t>(l)] = true;
      if (count <= 0) {
        out.flagged_blocks[static_cast<std::size_t>(l)] = true;
        continue;
      }
      const Eigen::RowVectorXd row = it.params.theta.row(l).head(d);
      const Matrix block = Matrix(row.asDiagonal()) - row.transpose() * row;
      out.within.block(l * d, l * d, d, d) += block / (scale * count);
    }
    const Vector dev = vartheta_of(it.params.theta) - out.vartheta;
    out.between += dev * dev.transpose();
  }
  const double post = static_cast<double>(T - t0);
  out.within /= post;
  out.between /= (post - 1.0);
  out.cov = out.within + out.between;
  return out;
}

}  // namespace latent_truth
