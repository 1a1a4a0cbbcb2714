#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latent_truth/data.hpp"
#include "latent_truth/mixture.hpp"
#include "latent_truth/relabel.hpp"
#include "latent_truth/sem.hpp"
#include "latent_truth/types.hpp"

namespace latent_truth {

// ---- Worker pool -------------------------------------------------------------

// Runs fn(0..n-1) on up to `jobs` threads (0 = hardware concurrency). Each
// job must write only its own output slot. If jobs throw, the exception of
// the lowest-indexed failing job is rethrown after all threads finish.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

// Bootstrap index source; the default is resample_indices.
using Resampler = std::function<std::vector<std::size_t>(std::size_t n, std::uint64_t key)>;

// ---- Fitting pipeline --------------------------------------------------------

/// A fit relabelled to named vote classes, with its Rubin variance.
struct GroupFit {
  std::string name;
  SemTrace trace;  // already relabelled
  Permutation relabel;
  VarianceEstimate variance;
  const ModelParams& params() const { return trace.final_params; }
};

// sem_fit, then match_to_labels on the table's own vote frequencies, then
// rubin_variance of the relabelled chain.
GroupFit fit_and_label(const VoteTable& table, const SemConfig& sem, const RubinOptions& rubin = {},
                       std::string name = {});

// As fit_and_label, but aligns to `reference` with match_to_reference.
GroupFit fit_and_align(const VoteTable& table, const SemConfig& sem, const ModelParams& reference,
                       const RubinOptions& rubin = {}, std::string name = {});

// ---- Expert heterogeneity ----------------------------------------------------

/// Posteriors with expert j's votes removed: SEM refit on the J-1 remaining
/// votes, aligned to `reference` (the all-experts fit).
PosteriorMatrix leave_one_out_posteriors(const VoteTable& table, const ModelParams& reference,
                                         std::size_t j, const SemConfig& sem);

struct LambdaValue {
  double value = 0.0;
  bool floored = false;  // some tau entry at the vote was 0 and the floor was used
};

inline constexpr double kLogFloor = 1e-12;

// -sum_i log tau_{(-j)}(i, V_j(i)) over `rows` (all rows when empty).
LambdaValue expert_lambda(const VoteTable& table, std::size_t j, const PosteriorMatrix& tau_minus_j,
                          std::span<const std::size_t> rows = {});

struct ExpertStat {
  std::optional<std::string> city;
  std::vector<double> lambda_hat;   // per expert, over the selected rows
  std::vector<bool> lambda_floored;
  Matrix d_boot;                    // J x B
  std::optional<Matrix> randomized_d_boot;

  std::vector<double> mean_d() const;
  std::vector<double> mean_randomized_d() const;
};

struct ExpertBootstrapOptions {
  int b_reps = 200;
  bool randomized = false;
  std::uint64_t seed = 1;
  // Restrict the statistic to these rows (per-city split); empty = all.
  std::vector<std::size_t> rows;
  std::optional<std::string> city;
  unsigned jobs = 1;
};

/// Inner bootstrap: resample images with replacement, posteriors held fixed.
/// D_j = |Lambda_j - mean_{l != j} Lambda_l| per draw. The randomized
/// variant permutes the experts of every image (one permutation per image,
/// fixed across draws): slot j scores expert rho(j)'s vote against rho(j)'s
/// leave-one-out posterior. Observed and randomized statistics share the
/// same resampled indices.
ExpertStat expert_bootstrap(const VoteTable& table, std::span<const PosteriorMatrix> taus_minus_j,
                            const ExpertBootstrapOptions& options);

struct ExpertConfig {
  SemConfig sem;  // seed is ignored; SEM seeds derive from `seed`
  int b_reps = 200;
  bool randomized = false;
  bool per_city = false;
  std::uint64_t seed = 1;
  unsigned jobs = 0;
};

struct ExpertAnalysis {
  GroupFit reference;  // all-experts fit
  std::vector<PosteriorMatrix> loo;
  ExpertStat overall;
  std::vector<ExpertStat> per_city;
  bool relabel_flagged = false;  // any alignment in this analysis was flagged
};

// Full-table fit, leave-one-out refits for every expert, inner bootstrap and
// optional per-city split.
ExpertAnalysis expert_analysis(const VoteTable& table, const ExpertConfig& config);

struct OuterDraw {
  std::size_t b = 0;
  ExpertAnalysis analysis;
  bool relabel_flagged = false;
};

/// Outer bootstrap: resample images, refit and align to the original
/// all-experts fit, then leave-one-out and inner bootstrap on the draw.
/// Seeds other than the resampling stream are those of expert_analysis, so
/// an identity resample reproduces it.
std::vector<OuterDraw> expert_bootstrap_outer(const VoteTable& table, const ExpertConfig& config,
                                              int b_outer, const Resampler& resampler = {});

// ---- City tests --------------------------------------------------------------

enum class CityTestKind { pooled_t, bonferroni_z };

struct CityTestResult {
  double p = 1.0;
  double statistic = 0.0;  // t (pooled) or max |T_i| (Bonferroni)
  std::size_t rank = 0;
  double df = 0.0;
  Vector whitened;  // T
};

inline constexpr double kSvdRelativeCutoff = 1e-8;

/// delta = vartheta(a) - vartheta(b), V = cov(a) + cov(b),
/// T = V^{-1/2} delta with the symmetric pseudo-inverse root from an SVD.
/// pooled_t: one-sample t-test of the components of T, df = rank - 1.
/// bonferroni_z: min over components of the two-sided normal p, times rank.
CityTestResult city_test(const VarianceEstimate& a, const VarianceEstimate& b,
                         CityTestKind kind = CityTestKind::pooled_t);
CityTestResult city_test(const GroupFit& a, const GroupFit& b,
                         CityTestKind kind = CityTestKind::pooled_t);

struct CityConfig {
  SemConfig sem;  // seed ignored
  RubinOptions rubin;
  CityTestKind kind = CityTestKind::pooled_t;
  int bootstrap = 0;  // outer draws; 0 = none
  std::uint64_t seed = 1;
  unsigned jobs = 0;
  double level = 0.05;
};

struct PairResult {
  std::string a;
  std::string b;
  CityTestResult original;
  bool reject = false;
  std::vector<double> boot_p;
  std::optional<double> min_p;
  std::optional<double> median_p;
  std::size_t boot_flagged = 0;  // draws whose alignment was flagged
};

struct TestReport {
  std::vector<std::string> groups;
  std::vector<std::size_t> group_sizes;
  std::vector<PairResult> pairs;  // (0,1), (0,2), ..., (1,2), ...
  std::vector<GroupFit> fits;     // per group, in `groups` order
  double level = 0.05;

  const PairResult* find(const std::string& a, const std::string& b) const;
};

/// Per-group fits, all pairwise tests and optional outer bootstrap. Each
/// group's SEM seed derives from (seed, group name); bootstrap draws resample
/// each group separately, reuse that seed and align to the group's original
/// fit, so one group's draw serves every pair it appears in.
TestReport city_tests(const VoteTable& table, const CityConfig& config,
                      const Resampler& resampler = {});

struct CityBootstrapResult {
  double min_p = 1.0;
  double median_p = 1.0;
  std::vector<double> p_values;
  std::size_t flagged = 0;
};

// Outer bootstrap for one pair of groups (config.bootstrap draws).
CityBootstrapResult city_test_bootstrap(const VoteTable& table, const std::string& group_a,
                                        const std::string& group_b, const CityConfig& config,
                                        const Resampler& resampler = {});

}  // namespace latent_truth
