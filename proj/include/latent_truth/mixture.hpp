#pragma once

#include <optional>
#include <span>
#include <vector>

#include "latent_truth/data.hpp"
#include "latent_truth/types.hpp"

namespace latent_truth {

/// Prior pi over true classes and confusion matrix theta, where row l is
/// the vote distribution of an annotator looking at an image of class l.
struct ModelParams {
  Vector pi;
  Matrix theta;

  std::size_t n_classes() const { return static_cast<std::size_t>(pi.size()); }

  // Throws InputError unless pi and every theta row are probability vectors
  // within `tol`.
  void validate(double tol = 1e-10) const;

  static ModelParams uniform(std::size_t K);
};

// n x K, row i = P(Z_i = l | Y_i).
struct PosteriorMatrix {
  Matrix tau;
};

struct MleOptions {
  // Added to every M-step numerator (and K * smoothing to denominators).
  double smoothing = 0.0;
  // Source of rows for classes with no members; nullptr means uniform rows.
  const ModelParams* fallback = nullptr;
};

struct MleResult {
  ModelParams params;
  std::vector<int> class_counts;  // images assigned to each class
  std::vector<bool> zero_class;   // class had no members and used a fallback row
  bool any_zero_class() const;
};

// Complete-data maximum likelihood for known classes z (0-based):
// pi_l = n_l / n, theta_lk = sum_{i: z_i = l} Y_ik / (J n_l).
MleResult complete_data_mle(const VoteTable& table, std::span<const int> z,
                            const MleOptions& options = {});

// Same estimator from per-pattern assignment counts: assigned(p, l) is the
// number of images with count pattern p placed in class l.
MleResult complete_data_mle(const PatternIndex& patterns, int n_annotators,
                            const Matrix& assigned, const MleOptions& options = {});

// Responsibilities per pattern, computed in log space. log_marginal holds
// log sum_l pi_l prod_k theta_lk^Y_k (no multinomial coefficient); entries
// for impossible patterns are -inf and their tau rows are left at zero.
struct PatternPosterior {
  Matrix tau;
  Vector log_marginal;
  std::vector<bool> impossible;
};
PatternPosterior pattern_posterior(const PatternIndex& patterns, const ModelParams& params);

// Throws NumericalError naming the first image that has zero probability
// under every component.
PosteriorMatrix posterior(const VoteTable& table, const ModelParams& params);

struct LogLikelihood {
  double value = 0.0;   // -inf when impossible
  bool impossible = false;
  std::optional<std::size_t> impossible_row;
};

// sum_i log sum_l pi_l Mult(Y_i; J, theta_l), multinomial coefficient
// included. Per-image terms are combined by pairwise summation.
LogLikelihood log_likelihood(const VoteTable& table, const ModelParams& params);
LogLikelihood log_likelihood(const PatternIndex& patterns, const ModelParams& params);

// sum_i [log pi_{z_i} + sum_k Y_ik log theta_{z_i k}], parameter-free terms
// dropped.
double complete_data_log_likelihood(const VoteTable& table, std::span<const int> z,
                                    const ModelParams& params);

}  // namespace latent_truth
