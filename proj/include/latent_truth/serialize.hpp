#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latent_truth/analysis.hpp"
#include "latent_truth/data.hpp"
#include "latent_truth/mixture.hpp"
#include "latent_truth/relabel.hpp"
#include "latent_truth/sem.hpp"

namespace latent_truth {

using Json = nlohmann::ordered_json;

// Shortest decimal that round-trips. Non-finite values print as
// "nan"/"inf"/"-inf" in CSV; JSON writers store them as null.
std::string format_double(double x);

// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);
// Writes atomically enough for our purposes: full overwrite, binary mode.
void write_file(const std::filesystem::path& path, const std::string& content);

// {labels, pi, theta} with theta as a list of rows.
Json params_to_json(const ModelParams& params, const std::vector<std::string>& labels);
ModelParams params_from_json(const Json& j);

// Rows: true class with its theta row and prior; last row: vote frequencies.
std::string confusion_csv(const ModelParams& params, const std::vector<std::string>& labels,
                          const std::vector<double>& vote_frequencies);

// One JSON object per line: {t, pi, theta, loglik, zero_class_flags}.
std::string trace_jsonl(const SemTrace& trace);

// {dim, vartheta, cov} with cov row-major, plus flagged classes.
Json variance_to_json(const VarianceEstimate& v);

// 1-based integer array.
Json permutation_to_json(const Permutation& p);

Json spec_to_json(const GroundTruthSpec& spec);
GroundTruthSpec spec_from_json(const Json& j);

// expert,b,d_value,randomized,city; experts named by annotator id, b 1-based.
std::string expert_stat_csv(const std::vector<ExpertStat>& stats,
                            const std::vector<std::string>& annotator_ids);
// expert,lambda_hat,mean_d,mean_randomized_d,floored,city
std::string expert_summary_csv(const std::vector<ExpertStat>& stats,
                               const std::vector<std::string>& annotator_ids);

// city1,city2,original_p,minimal_p,median_p (bootstrap columns empty
// without a bootstrap).
std::string test_report_csv(const TestReport& report);
// Every pair with statistic, rank, df, rejection and bootstrap p values.
std::string test_report_detail_csv(const TestReport& report);
// Lower-triangular matrix of original p values; first column and header
// hold group names.
std::string test_report_matrix_csv(const TestReport& report);

}  // namespace latent_truth
