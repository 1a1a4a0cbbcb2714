#pragma once

#include <span>
#include <vector>

#include "latent_truth/mixture.hpp"
#include "latent_truth/sem.hpp"
#include "latent_truth/types.hpp"

namespace latent_truth {

/// sigma[l] = named class given to mixture component l (0-based).
struct Permutation {
  std::vector<std::size_t> sigma;
  // Set when a matcher had to break a stalemate or fall back to ordering by
  // pi; the assignment is still a bijection but less trustworthy.
  bool flagged = false;

  static Permutation identity(std::size_t K);
  std::size_t size() const { return sigma.size(); }
  bool is_bijection() const;
  bool is_identity() const;
  Permutation inverse() const;
  bool operator==(const Permutation& o) const { return sigma == o.sigma; }
};

// P(l, k) = pi_l * theta_lk: proportional to P(Z = l | V = k) in column k;
// row l is the weighted vote profile of component l.
Matrix class_posterior_matrix(const ModelParams& params);

/// Maps components onto named vote classes. Classes are visited in
/// descending vote frequency; each claims argmax_l pi_l theta_lk among the
/// unassigned components. A claim is kept when the argmax is not tied and no
/// other class claimed the same component in this pass; the rest retry in
/// the next pass over the remaining components. If a pass makes no progress
/// the most frequent waiting class takes its argmax (lowest index on ties)
/// and the result is flagged. Classes whose remaining scores are all zero
/// get the leftover components by descending pi (flagged).
Permutation match_to_labels(const ModelParams& params, std::span<const double> vote_frequencies);

/// Aligns a refit to a reference: reference classes in `ref_order` (default:
/// descending reference pi) take the unassigned refit row with the smallest
/// squared Euclidean distance between rows of the two P matrices, with the
/// same multi-pass conflict rule as match_to_labels.
Permutation match_to_reference(const ModelParams& boot, const ModelParams& ref);
Permutation match_to_reference(const ModelParams& boot, const ModelParams& ref,
                               std::span<const std::size_t> ref_order);

// Reorders pi entries and theta rows (columns are named vote classes and
// stay put): out.theta.row(sigma[l]) = params.theta.row(l).
ModelParams apply(const Permutation& perm, const ModelParams& params);

// Relabels every iteration, the initial and final estimates, counts and
// stored assignments of a chain.
SemTrace apply(const Permutation& perm, const SemTrace& trace);

// Reorders tau columns: out(i, sigma[l]) = tau(i, l).
PosteriorMatrix apply(const Permutation& perm, const PosteriorMatrix& tau);

// Indices sorted by descending value; ties keep the lower index first.
std::vector<std::size_t> descending_order(std::span<const double> values);

}  // namespace latent_truth
