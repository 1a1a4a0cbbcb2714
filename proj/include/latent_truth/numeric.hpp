#pragma once

#include <span>
#include <vector>

namespace latent_truth {

// log(sum(exp(x))); -inf when every entry is -inf (or x is empty).
double log_sum_exp(std::span<const double> x);

// Pairwise (cascade) summation; fixed association order for a given length.
double pairwise_sum(std::span<const double> x);

// log(J! / prod_k Y_k!) with J = sum_k Y_k.
double log_multinomial_coefficient(std::span<const int> counts);

// Median; averages the two middle values for even sizes. Empty -> NaN.
double median(std::vector<double> values);

// Two-sided p-value of a Student t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

// Two-sided standard-normal p-value.
double normal_two_sided_p(double z);

}  // namespace latent_truth
