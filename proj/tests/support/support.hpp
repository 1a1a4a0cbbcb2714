#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latent_truth/data.hpp"
#include "latent_truth/mixture.hpp"
#include "latent_truth/types.hpp"

namespace lt_test {

using latent_truth::Matrix;
using latent_truth::Vector;

struct KsResult {
  double statistic = 0.0;
  double p = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
// distribution (Stephens' small-sample correction).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().maxCoeff();
}

// Wide table from count rows; labels "1".."K" unless given.
latent_truth::VoteTable make_table(const std::vector<std::vector<int>>& counts,
                                   std::vector<std::string> labels = {},
                                   const std::vector<std::string>& groups = {});

// K x K with `diag` on the diagonal and the rest spread evenly.
Matrix flat_theta(std::size_t K, double diag);

// Random diagonally dominant row-stochastic matrix: diagonal in
// [diag_lo, diag_hi], off-diagonal mass split by random weights.
Matrix random_dominant_theta(std::size_t K, double diag_lo, double diag_hi, std::uint64_t seed);

// Random prior with max/min ratio at most `ratio`.
Vector random_pi(std::size_t K, double ratio, std::uint64_t seed);

// Random permutation sigma of size K (sigma[l] = image of l).
std::vector<std::size_t> random_permutation(std::size_t K, std::uint64_t seed);

// Permutes components: row sigma[l] of the result is row l of params.
latent_truth::ModelParams permute_components(const latent_truth::ModelParams& params,
                                             const std::vector<std::size_t>& sigma);

// Multinomial pmf J!/prod(y_k!) prod theta_k^y_k evaluated directly in
// probability space with factorials (independent of the library's log math).
double multinomial_pmf(const std::vector<int>& y, const std::vector<double>& theta);

// All count vectors of length K summing to J.
std::vector<std::vector<int>> all_count_vectors(std::size_t K, int J);

// Scratch directory under the build tree, emptied on creation.
std::string scratch_dir(const std::string& name);

}  // namespace lt_test
