#pragma once

#include <Eigen/Dense>

namespace latent_truth {

// Row-major so that a matrix row (e.g. theta_l) is a contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace latent_truth
