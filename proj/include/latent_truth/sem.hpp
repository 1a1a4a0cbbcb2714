#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "latent_truth/data.hpp"
#include "latent_truth/mixture.hpp"
#include "latent_truth/types.hpp"

namespace latent_truth {

enum class InitKind { majority_vote, random, provided };

struct SemConfig {
  int t_total = 300;   // T
  int t_burnin = 100;  // t0; iterations t0+1..T are averaged
  std::uint64_t seed = 1;
  InitKind init = InitKind::majority_vote;
  std::optional<ModelParams> initial;  // required for InitKind::provided
  double smoothing = 0.0;       // M-step smoothing for t >= 1
  double init_smoothing = 0.5;  // smoothing of the iteration-0 estimate
  bool store_z = false;

  void validate() const;
};

struct SemIteration {
  ModelParams params;
  std::vector<int> class_counts;      // n_l(t)
  // Members behind each theta row: n_l(t), or the count of the iteration
  // whose row was retained when class l was empty.
  std::vector<int> effective_counts;
  std::vector<bool> zero_class;
  double loglik = 0.0;
};

/// The SEM chain. iterations[t-1] holds the estimate of iteration t.
struct SemTrace {
  std::size_t n_images = 0;
  int n_annotators = 0;
  int t_burnin = 0;
  ModelParams initial;
  double initial_loglik = 0.0;
  std::vector<SemIteration> iterations;
  std::vector<std::vector<int>> z_per_iter;  // only with store_z
  ModelParams final_params;                  // mean over iterations t0+1..T

  std::size_t n_classes() const { return initial.n_classes(); }
  std::size_t zero_class_events() const;
};

/// Stochastic EM: per iteration compute tau from the current estimate, draw
/// each Z_i from Multi(tau_i, 1) with a uniform addressed by (seed, t, i),
/// and re-estimate by complete-data MLE.
///
/// Throws NumericalError (with the iteration) if an image becomes
/// impossible, DegenerateModelError after 3 consecutive iterations with all
/// images in one class.
SemTrace sem_fit(const VoteTable& table, const SemConfig& config);

// Elementwise mean of pi and theta over `iterations` [first, end).
ModelParams mean_params(const std::vector<SemIteration>& iterations, std::size_t first);

// Theta rows with the last column dropped, concatenated: length K(K-1).
Vector vartheta_of(const Matrix& theta);

struct RubinOptions {
  // Divide the within term by J * n_l, the complete-data variance of the
  // per-vote MLE. false uses n_l alone.
  bool annotator_scaled = true;
};

struct VarianceEstimate {
  Vector vartheta;  // of the final estimate
  Matrix cov;       // within + between
  Matrix within;
  Matrix between;
  std::vector<bool> flagged_blocks;  // class had an empty effective count
};

/// Multiple-imputation variance over the post-burn-in chain:
/// mean_t blockdiag[(diag(theta_l) - theta_l^T theta_l) / n_l(t)]
/// + sum_t (vartheta_t - vartheta_final)(...)^T / (T - t0 - 1).
VarianceEstimate rubin_variance(const SemTrace& trace, const RubinOptions& options = {});

}  // namespace latent_truth
