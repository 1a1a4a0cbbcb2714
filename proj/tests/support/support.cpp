#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "latent_truth/rng.hpp"

namespace lt_test {

namespace lt = latent_truth;

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  double p = 0.0;
  if (lambda < 1e-3) {
    p = 1.0;
  } else {
    for (int k = 1; k <= 200; ++k) {
      const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
      p += term;
      if (std::fabs(term) < 1e-16) break;
    }
    p = std::clamp(p, 0.0, 1.0);
  }
  return {d, p};
}


lt::VoteTable make_table(const std::vector<std::vector<int>>& counts, std::vector<std::string> labels,
                         const std::vector<std::string>& groups) {
  const std::size_t K = counts.empty() ? labels.size() : counts.front().size();
  if (labels.empty()) {
    for (std::size_t k = 0; k < K; ++k) labels.push_back(std::to_string(k + 1));
  }
  int J = 0;
  std::vector<lt::VoteRow> rows;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    lt::VoteRow r;
    r.image_id = std::to_string(i + 1);
    r.counts = counts[i];
    if (!groups.empty()) r.group = groups[i];
    J = std::accumulate(counts[i].begin(), counts[i].end(), 0);
    rows.push_back(std::move(r));
  }
  return lt::VoteTable(std::move(labels), J, std::move(rows));
}

Matrix flat_theta(std::size_t K, double diag) {
  const auto n = static_cast<Eigen::Index>(K);
  Matrix t = Matrix::Constant(n, n, (1.0 - diag) / static_cast<double>(K - 1));
  for (Eigen::Index l = 0; l < n; ++l) t(l, l) = diag;
  return t;
}

Matrix random_dominant_theta(std::size_t K, double diag_lo, double diag_hi, std::uint64_t seed) {
  lt::CounterRng rng(seed);
  const auto n = static_cast<Eigen::Index>(K);
  Matrix t(n, n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const double d = diag_lo + (diag_hi - diag_lo) * rng.uniform();
    std::vector<double> w(K);
    double s = 0.0;
    for (auto& x : w) s += (x = 0.2 + rng.uniform());
    for (Eigen::Index k = 0; k < n; ++k) {
      t(l, k) = k == l ? d : (1.0 - d) * w[static_cast<std::size_t>(k)] / (s - w[static_cast<std::size_t>(l)]);
    }
  }
  return t;
}

Vector random_pi(std::size_t K, double ratio, std::uint64_t seed) {
  lt::CounterRng rng(seed);
  Vector p(static_cast<Eigen::Index>(K));
  for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = 1.0 + (ratio - 1.0) * rng.uniform();
  return p / p.sum();
}

std::vector<std::size_t> random_permutation(std::size_t K, std::uint64_t seed) {
  lt::CounterRng rng(seed);
  return rng.permutation(K);
}

lt::ModelParams permute_components(const lt::ModelParams& params, const std::vector<std::size_t>& sigma) {
  lt::ModelParams out = params;
  for (std::size_t l = 0; l < sigma.size(); ++l) {
    out.pi(static_cast<Eigen::Index>(sigma[l])) = params.pi(static_cast<Eigen::Index>(l));
    out.theta.row(static_cast<Eigen::Index>(sigma[l])) = params.theta.row(static_cast<Eigen::Index>(l));
  }
  return out;
}

double multinomial_pmf(const std::vector<int>& y, const std::vector<double>& theta) {
  auto fact = [](int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  int J = 0;
  double p = 1.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    J += y[k];
    p *= std::pow(theta[k], y[k]) / fact(y[k]);
  }
  return p * fact(J);
}

std::vector<std::vector<int>> all_count_vectors(std::size_t K, int J) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(K, 0);
  auto rec = [&](auto&& self, std::size_t k, int left) -> void {
    if (k + 1 == K) {
      cur[k] = left;
      out.push_back(cur);
      return;
    }
    for (int v = left; v >= 0; --v) {
      cur[k] = v;
      self(self, k + 1, left - v);
    }
  };
  rec(rec, 0, J);
  return out;
}

std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace lt_test
