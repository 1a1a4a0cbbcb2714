#include "latent_truth/mixture.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "latent_truth/error.hpp"
#include "latent_truth/numeric.hpp"

namespace latent_truth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix log_of(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(r, c) = m(r, c) > 0.0 ? std::log(m(r, c)) : kNegInf;
    }
  }
  return out;
}

void check_compatible(std::size_t K, const ModelParams& params) {
  if (params.n_classes() != K || static_cast<std::size_t>(params.theta.rows()) != K ||
      static_cast<std::size_t>(params.theta.cols()) != K) {
    throw InputError("model has " + std::to_string(params.n_classes()) +
                     " classes but the vote table has " + std::to_string(K));
  }
}

}  // namespace

void ModelParams::validate(double tol) const {
  const auto K = pi.size();
  if (K == 0) throw InputError("model has no classes");
  if (theta.rows() != K || theta.cols() != K) throw InputError("theta must be K x K");
  auto check = [tol](const auto& v, const std::string& what) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (!(v(k) >= 0.0) || !std::isfinite(v(k))) throw InputError(what + " has a negative entry");
      s += v(k);
    }
    if (std::fabs(s - 1.0) > tol) throw InputError(what + " does not sum to 1");
  };
  check(pi, "pi");
  for (Eigen::Index l = 0; l < K; ++l) check(theta.row(l), "theta row " + std::to_string(l + 1));
}

ModelParams ModelParams::uniform(std::size_t K) {
  const auto n = static_cast<Eigen::Index>(K);
  return {Vector::Constant(n, 1.0 / static_cast<double>(K)),
          Matrix::Constant(n, n, 1.0 / static_cast<double>(K))};
}

bool MleResult::any_zero_class() const {
  for (bool z : zero_class) {
    if (z) return true;
  }
  return false;
}

MleResult complete_data_mle(const PatternIndex& patterns, int n_annotators,
                            const Matrix& assigned, const MleOptions& options) {
  const std::size_t K = patterns.n_classes;
  const auto Ki = static_cast<Eigen::Index>(K);
  const double alpha = options.smoothing;
  if (options.fallback) check_compatible(K, *options.fallback);

  Matrix numer = Matrix::Zero(Ki, Ki);
  std::vector<double> members(K, 0.0);
  for (std::size_t p = 0; p < patterns.n_patterns(); ++p) {
    const auto y = patterns.pattern(p);
    for (std::size_t l = 0; l < K; ++l) {
      const double m = assigned(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(l));
      if (m == 0.0) continue;
      members[l] += m;
      for (std::size_t k = 0; k < K; ++k) {
        numer(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) += m * y[k];
      }
    }
  }
  double n = 0.0;
  for (double m : members) n += m;

  MleResult out;
  out.params.pi = Vector::Zero(Ki);
  out.params.theta = Matrix::Zero(Ki, Ki);
  out.class_counts.resize(K);
  out.zero_class.assign(K, false);
  const double J = n_annotators;
  for (std::size_t l = 0; l < K; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    out.class_counts[l] = static_cast<int>(members[l]);
    out.params.pi(li) = (members[l] + alpha) / (n + static_cast<double>(K) * alpha);
    if (members[l] == 0.0) out.zero_class[l] = true;
    if (members[l] == 0.0 && alpha == 0.0) {
      out.params.theta.row(li) = options.fallback
                                     ? Eigen::RowVectorXd(options.fallback->theta.row(li))
                                     : Eigen::RowVectorXd::Constant(Ki, 1.0 / static_cast<double>(K));
      continue;
    }
    const double denom = J * members[l] + static_cast<double>(K) * alpha;
    for (std::size_t k = 0; k < K; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      out.params.theta(li, ki) = (numer(li, ki) + alpha) / denom;
    }
  }
  return out;
}

MleResult complete_data_mle(const VoteTable& table, std::span<const int> z,
                            const MleOptions& options) {
  if (z.size() != table.size()) throw InputError("assignment length does not match table");
  if (table.empty()) throw InputError("complete-data MLE needs at least one image");
  const auto patterns = PatternIndex::build(table);
  const auto K = static_cast<Eigen::Index>(table.n_classes());
  Matrix assigned = Matrix::Zero(static_cast<Eigen::Index>(patterns.n_patterns()), K);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] < 0 || z[i] >= K) throw InputError("class assignment out of range");
    assigned(static_cast<Eigen::Index>(patterns.row_pattern[i]), z[i]) += 1.0;
  }
  return complete_data_mle(patterns, table.n_annotators(), assigned, options);
}

PatternPosterior pattern_posterior(const PatternIndex& patterns, const ModelParams& params) {
  const std::size_t K = patterns.n_classes;
  check_compatible(K, params);
  const auto Ki = static_cast<Eigen::Index>(K);
  const Matrix log_theta = log_of(params.theta);
  std::vector<double> log_pi(K);
  for (std::size_t l = 0; l < K; ++l) {
    log_pi[l] = params.pi(static_cast<Eigen::Index>(l)) > 0.0
                    ? std::log(params.pi(static_cast<Eigen::Index>(l)))
                    : kNegInf;
  }

  const auto P = static_cast<Eigen::Index>(patterns.n_patterns());
  PatternPosterior out{Matrix::Zero(P, Ki), Vector::Zero(P), std::vector<bool>(patterns.n_patterns())};
  std::vector<double> joint(K);
  for (std::size_t p = 0; p < patterns.n_patterns(); ++p) {
    const auto y = patterns.pattern(p);
    for (std::size_t l = 0; l < K; ++l) {
      double s = log_pi[l];
      for (std::size_t k = 0; k < K && s != kNegInf; ++k) {
        if (y[k] == 0) continue;  // 0 * log 0 = 0
        s += y[k] * log_theta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
      }
      joint[l] = s;
    }
    const double lse = log_sum_exp(joint);
    const auto pi_ = static_cast<Eigen::Index>(p);
    out.log_marginal(pi_) = lse;
    if (lse == kNegInf) {
      out.impossible[p] = true;
      continue;
    }
    for (std::size_t l = 0; l < K; ++l) {
      out.tau(pi_, static_cast<Eigen::Index>(l)) = std::exp(joint[l] - lse);
    }
  }
  return out;
}

PosteriorMatrix posterior(const VoteTable& table, const ModelParams& params) {
  const auto patterns = PatternIndex::build(table);
  const auto pp = pattern_posterior(patterns, params);
  for (std::size_t p = 0; p < patterns.n_patterns(); ++p) {
    if (pp.impossible[p]) {
      throw NumericalError("image " + table.row(patterns.first_row[p]).image_id +
                           " has zero probability under every mixture component");
    }
  }
  PosteriorMatrix out{Matrix(static_cast<Eigen::Index>(table.size()),
                             static_cast<Eigen::Index>(table.n_classes()))};
  for (std::size_t i = 0; i < table.size(); ++i) {
    out.tau.row(static_cast<Eigen::Index>(i)) =
        pp.tau.row(static_cast<Eigen::Index>(patterns.row_pattern[i]));
  }
  return out;
}

LogLikelihood log_likelihood(const PatternIndex& patterns, const ModelParams& params) {
  const auto pp = pattern_posterior(patterns, params);
  std::vector<double> terms;
  terms.reserve(patterns.n_patterns());
  LogLikelihood out;
  for (std::size_t p = 0; p < patterns.n_patterns(); ++p) {
    if (pp.impossible[p]) {
      out.impossible = true;
      if (!out.impossible_row || patterns.first_row[p] < *out.impossible_row) {
        out.impossible_row = patterns.first_row[p];
      }
      continue;
    }
    const double per_image =
        pp.log_marginal(static_cast<Eigen::Index>(p)) + log_multinomial_coefficient(patterns.pattern(p));
    terms.push_back(static_cast<double>(patterns.multiplicity[p]) * per_image);
  }
  out.value = out.impossible ? kNegInf : pairwise_sum(terms);
  return out;
}

LogLikelihood log_likelihood(const VoteTable& table, const ModelParams& params) {
  check_compatible(table.n_classes(), params);
  return log_likelihood(PatternIndex::build(table), params);
}

double complete_data_log_likelihood(const VoteTable& table, std::span<const int> z,
                                    const ModelParams& params) {
  check_compatible(table.n_classes(), params);
  if (z.size() != table.size()) throw InputError("assignment length does not match table");
  std::vector<double> terms(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto l = static_cast<Eigen::Index>(z[i]);
    double s = params.pi(l) > 0.0 ? std::log(params.pi(l)) : kNegInf;
    const auto& y = table.row(i).counts;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y[k] == 0) continue;
      const double t = params.theta(l, static_cast<Eigen::Index>(k));
      s += y[k] * (t > 0.0 ? std::log(t) : kNegInf);
    }
    terms[i] = s;
  }
  return pairwise_sum(terms);
}

}  // namespace latent_truth
