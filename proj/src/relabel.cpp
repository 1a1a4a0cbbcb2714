#include "latent_truth/relabel.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "latent_truth/error.hpp"

namespace latent_truth {

namespace {

// Multi-pass greedy allocation shared by both matchers. score(k, l) rates
// giving named class k component l; larger is better. A relation k -> l
// counts when l is k's strict best among free components and no other class
// claims l in the same pass. Returns component_of[k].
std::vector<std::size_t> allocate(std::size_t K, std::span<const std::size_t> order,
                                  const std::function<double(std::size_t, std::size_t)>& score,
                                  const ModelParams& params, bool zero_fallback, bool& flagged) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> component_of(K, kNone);
  std::vector<bool> taken(K, false);
  std::size_t remaining = K;

  while (remaining > 0) {
    std::vector<std::size_t> target(K, kNone);
    std::vector<bool> tied(K, false);
    std::vector<int> claims(K, 0);
    bool any_positive = false;
    for (std::size_t k : order) {
      if (component_of[k] != kNone) continue;
      std::size_t best = kNone;
      double best_score = 0.0;
      int n_best = 0;
      for (std::size_t l = 0; l < K; ++l) {
        if (taken[l]) continue;
        const double s = score(k, l);
        if (best == kNone || s > best_score) {
          best = l;
          best_score = s;
          n_best = 1;
        } else if (s == best_score) {
          ++n_best;
        }
      }
      if (best_score > 0.0) any_positive = true;
      target[k] = best;
      // A tied argmax is no relation at all this pass; the class waits
      // until allocations elsewhere break the tie.
      tied[k] = n_best > 1;
      if (!tied[k]) ++claims[best];
    }

    if (zero_fallback && !any_positive) {
      // Nothing distinguishes the leftovers: hand out components by
      // descending pi in class-frequency order.
      std::vector<double> pi(params.pi.data(), params.pi.data() + params.pi.size());
      std::vector<std::size_t> free_components;
      for (std::size_t l : descending_order(pi)) {
        if (!taken[l]) free_components.push_back(l);
      }
      std::size_t next = 0;
      for (std::size_t k : order) {
        if (component_of[k] != kNone) continue;
        component_of[k] = free_components[next++];
      }
      flagged = true;
      break;
    }

    bool progress = false;
    for (std::size_t k : order) {
      if (component_of[k] != kNone || tied[k] || claims[target[k]] != 1) continue;
      component_of[k] = target[k];
      taken[target[k]] = true;
      --remaining;
      progress = true;
    }
    if (!progress) {
      for (std::size_t k : order) {
        if (component_of[k] != kNone) continue;
        component_of[k] = target[k];
        taken[target[k]] = true;
        --remaining;
        break;
      }
      flagged = true;
    }
  }
  return component_of;
}

Permutation from_component_of(const std::vector<std::size_t>& component_of, bool flagged) {
  Permutation p;
  p.sigma.resize(component_of.size());
  for (std::size_t k = 0; k < component_of.size(); ++k) p.sigma[component_of[k]] = k;
  p.flagged = flagged;
  return p;
}

void check_perm(const Permutation& perm, std::size_t K) {
  if (perm.size() != K || !perm.is_bijection()) {
    throw InputError("permutation is not a bijection on K classes");
  }
}

}  // namespace

Permutation Permutation::identity(std::size_t K) {
  Permutation p;
  p.sigma.resize(K);
  std::iota(p.sigma.begin(), p.sigma.end(), std::size_t{0});
  return p;
}

bool Permutation::is_bijection() const {
  std::vector<bool> seen(sigma.size(), false);
  for (auto s : sigma) {
    if (s >= sigma.size() || seen[s]) return false;
    seen[s] = true;
  }
  return true;
}

bool Permutation::is_identity() const {
  for (std::size_t l = 0; l < sigma.size(); ++l) {
    if (sigma[l] != l) return false;
  }
  return true;
}

Permutation Permutation::inverse() const {
  Permutation p;
  p.sigma.resize(sigma.size());
  for (std::size_t l = 0; l < sigma.size(); ++l) p.sigma[sigma[l]] = l;
  p.flagged = flagged;
  return p;
}

std::vector<std::size_t> descending_order(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return idx;
}

Matrix class_posterior_matrix(const ModelParams& params) {
  return params.pi.asDiagonal() * params.theta;
}

Permutation match_to_labels(const ModelParams& params, std::span<const double> vote_frequencies) {
  const std::size_t K = params.n_classes();
  if (vote_frequencies.size() != K) throw InputError("vote frequencies must have K entries");
  for (double f : vote_frequencies) {
    if (!(f >= 0.0)) throw InputError("vote frequencies must be non-negative");
  }
  const Matrix P = class_posterior_matrix(params);
  const auto order = descending_order(vote_frequencies);
  bool flagged = false;
  const auto component_of = allocate(
      K, order,
      [&](std::size_t k, std::size_t l) {
        return P(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
      },
      params, true, flagged);
  return from_component_of(component_of, flagged);
}

Permutation match_to_reference(const ModelParams& boot, const ModelParams& ref) {
  std::vector<double> pi(ref.pi.data(), ref.pi.data() + ref.pi.size());
  const auto order = descending_order(pi);
  return match_to_reference(boot, ref, order);
}

Permutation match_to_reference(const ModelParams& boot, const ModelParams& ref,
                               std::span<const std::size_t> ref_order) {
  const std::size_t K = ref.n_classes();
  if (boot.n_classes() != K) throw InputError("cannot match fits with different K");
  if (ref_order.size() != K) throw InputError("reference order must rank all K classes");
  const Matrix P_ref = class_posterior_matrix(ref);
  const Matrix P_boot = class_posterior_matrix(boot);
  bool flagged = false;
  const auto component_of = allocate(
      K, ref_order,
      [&](std::size_t k, std::size_t l) {
        // Negated so that "larger is better" picks the smallest distance.
        return -(P_ref.row(static_cast<Eigen::Index>(k)) - P_boot.row(static_cast<Eigen::Index>(l)))
                    .squaredNorm();
      },
      boot, false, flagged);
  return from_component_of(component_of, flagged);
}

ModelParams apply(const Permutation& perm, const ModelParams& params) {
  const std::size_t K = params.n_classes();
  check_perm(perm, K);
  ModelParams out{Vector(params.pi.size()), Matrix(params.theta.rows(), params.theta.cols())};
  for (std::size_t l = 0; l < K; ++l) {
    const auto to = static_cast<Eigen::Index>(perm.sigma[l]);
    const auto from = static_cast<Eigen::Index>(l);
    out.pi(to) = params.pi(from);
    out.theta.row(to) = params.theta.row(from);
  }
  return out;
}

SemTrace apply(const Permutation& perm, const SemTrace& trace) {
  const std::size_t K = trace.n_classes();
  check_perm(perm, K);
  auto reorder = [&](const auto& v) {
    std::decay_t<decltype(v)> out(v.size());
    for (std::size_t l = 0; l < K; ++l) out[perm.sigma[l]] = v[l];
    return out;
  };
  SemTrace out = trace;
  out.initial = apply(perm, trace.initial);
  out.final_params = apply(perm, trace.final_params);
  for (auto& it : out.iterations) {
    it.params = apply(perm, it.params);
    it.class_counts = reorder(it.class_counts);
    it.effective_counts = reorder(it.effective_counts);
    it.zero_class = reorder(it.zero_class);
  }
  for (auto& z : out.z_per_iter) {
    for (auto& zi : z) zi = static_cast<int>(perm.sigma[static_cast<std::size_t>(zi)]);
  }
  return out;
}

PosteriorMatrix apply(const Permutation& perm, const PosteriorMatrix& tau) {
  const auto K = static_cast<std::size_t>(tau.tau.cols());
  check_perm(perm, K);
  PosteriorMatrix out{Matrix(tau.tau.rows(), tau.tau.cols())};
  for (std::size_t l = 0; l < K; ++l) {
    out.tau.col(static_cast<Eigen::Index>(perm.sigma[l])) = tau.tau.col(static_cast<Eigen::Index>(l));
  }
  return out;
}

}  // namespace latent_truth
