#include "latent_truth/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "latent_truth/error.hpp"

namespace latent_truth {

namespace {

Json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Json matrix_rows(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vector vector_from(const Json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError(what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw InputError(what + " must be a non-empty list of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_from(j[r], what + " row " + std::to_string(r + 1));
    if (static_cast<std::size_t>(row.size()) != cols) throw InputError(what + " rows differ in length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

const Json& field(const Json& j, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (j.contains(n)) return j.at(n);
  }
  throw InputError(std::string("missing field '") + *names.begin() + "'");
}

std::string cell(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string expert_name(const std::vector<std::string>& ids, std::size_t j) {
  return j < ids.size() ? ids[j] : std::to_string(j + 1);
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{}", x);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

Json params_to_json(const ModelParams& params, const std::vector<std::string>& labels) {
  Json j;
  j["labels"] = labels;
  j["pi"] = vector_json(params.pi);
  j["theta"] = matrix_rows(params.theta);
  return j;
}

ModelParams params_from_json(const Json& j) {
  ModelParams p{vector_from(field(j, {"pi"}), "pi"), matrix_from(field(j, {"theta"}), "theta")};
  p.validate();
  return p;
}

std::string confusion_csv(const ModelParams& params, const std::vector<std::string>& labels,
                          const std::vector<double>& vote_frequencies) {
  const auto K = params.n_classes();
  if (labels.size() != K || vote_frequencies.size() != K) {
    throw InputError("confusion export needs K labels and K vote frequencies");
  }
  std::string out = "true_class";
  for (const auto& l : labels) out += "," + csv_field(l);
  out += ",prior\n";
  for (std::size_t r = 0; r < K; ++r) {
    out += csv_field(labels[r]);
    for (std::size_t c = 0; c < K; ++c) {
      out += "," + format_double(params.theta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    out += "," + format_double(params.pi(static_cast<Eigen::Index>(r))) + "\n";
  }
  out += "vote_frequency";
  for (double f : vote_frequencies) out += "," + format_double(f);
  out += ",\n";
  return out;
}

std::string trace_jsonl(const SemTrace& trace) {
  std::string out;
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const auto& it = trace.iterations[t];
    Json j;
    j["t"] = t + 1;
    j["pi"] = vector_json(it.params.pi);
    j["theta"] = matrix_rows(it.params.theta);
    j["loglik"] = number(it.loglik);
    j["class_counts"] = it.class_counts;
    Json flags = Json::array();
    for (bool z : it.zero_class) flags.push_back(z);
    j["zero_class_flags"] = std::move(flags);
    out += j.dump() + "\n";
  }
  return out;
}

Json variance_to_json(const VarianceEstimate& v) {
  Json j;
  j["dim"] = v.vartheta.size();
  j["vartheta"] = vector_json(v.vartheta);
  Json cov = Json::array();
  for (Eigen::Index r = 0; r < v.cov.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cov.cols(); ++c) cov.push_back(number(v.cov(r, c)));
  }
  j["cov"] = std::move(cov);
  Json flagged = Json::array();
  for (std::size_t l = 0; l < v.flagged_blocks.size(); ++l) {
    if (v.flagged_blocks[l]) flagged.push_back(l + 1);
  }
  j["flagged_classes"] = std::move(flagged);
  return j;
}

Json permutation_to_json(const Permutation& p) {
  Json a = Json::array();
  for (auto s : p.sigma) a.push_back(s + 1);
  return a;
}

Json spec_to_json(const GroundTruthSpec& spec) {
  Json j;
  if (!spec.labels.empty()) j["labels"] = spec.labels;
  j["pi_true"] = vector_json(spec.pi_true);
  j["theta_true"] = matrix_rows(spec.theta_true);
  j["n_annotators"] = spec.n_annotators;
  if (!spec.expert_thetas.empty()) {
    Json e = Json::array();
    for (const auto& m : spec.expert_thetas) e.push_back(matrix_rows(m));
    j["expert_thetas"] = std::move(e);
  }
  if (!spec.groups.empty()) {
    Json gs = Json::array();
    for (const auto& g : spec.groups) {
      Json gj;
      gj["name"] = g.name;
      gj["n_images"] = g.n_images;
      if (g.pi) gj["pi"] = vector_json(*g.pi);
      if (g.theta) gj["theta"] = matrix_rows(*g.theta);
      gs.push_back(std::move(gj));
    }
    j["groups"] = std::move(gs);
  }
  j["n_images"] = spec.n_images;
  j["seed"] = spec.seed;
  return j;
}

GroundTruthSpec spec_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("spec must be a JSON object");
  GroundTruthSpec s;
  try {
    if (j.contains("labels")) s.labels = j.at("labels").get<std::vector<std::string>>();
    s.pi_true = vector_from(field(j, {"pi_true", "pi"}), "pi_true");
    s.theta_true = matrix_from(field(j, {"theta_true", "theta"}), "theta_true");
    if (j.contains("n_annotators")) s.n_annotators = j.at("n_annotators").get<int>();
    if (j.contains("expert_thetas")) {
      std::size_t e = 0;
      for (const auto& m : j.at("expert_thetas")) {
        s.expert_thetas.push_back(matrix_from(m, "expert_thetas[" + std::to_string(++e) + "]"));
      }
    }
    if (j.contains("groups")) {
      for (const auto& gj : j.at("groups")) {
        GroupSpec g;
        g.name = gj.at("name").get<std::string>();
        g.n_images = gj.at("n_images").get<std::size_t>();
        if (gj.contains("pi")) g.pi = vector_from(gj.at("pi"), "group " + g.name + " pi");
        if (gj.contains("theta")) g.theta = matrix_from(gj.at("theta"), "group " + g.name + " theta");
        s.groups.push_back(std::move(g));
      }
    }
    if (j.contains("n_images")) s.n_images = j.at("n_images").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string expert_stat_csv(const std::vector<ExpertStat>& stats,
                            const std::vector<std::string>& annotator_ids) {
  std::string out = "expert,b,d_value,randomized,city\n";
  for (const auto& st : stats) {
    const std::string city = st.city ? csv_field(*st.city) : std::string();
    auto emit = [&](const Matrix& d, const char* randomized) {
      for (Eigen::Index j = 0; j < d.rows(); ++j) {
        const std::string name = csv_field(expert_name(annotator_ids, static_cast<std::size_t>(j)));
        for (Eigen::Index b = 0; b < d.cols(); ++b) {
          out += name;
          out += ',';
          out += std::to_string(b + 1);
          out += ',';
          out += format_double(d(j, b));
          out += ',';
          out += randomized;
          out += ',';
          out += city;
          out += '\n';
        }
      }
    };
    emit(st.d_boot, "false");
    if (st.randomized_d_boot) emit(*st.randomized_d_boot, "true");
  }
  return out;
}

std::string expert_summary_csv(const std::vector<ExpertStat>& stats,
                               const std::vector<std::string>& annotator_ids) {
  std::string out = "expert,lambda_hat,mean_d,mean_randomized_d,floored,city\n";
  for (const auto& st : stats) {
    const auto md = st.mean_d();
    const auto mr = st.mean_randomized_d();
    for (std::size_t j = 0; j < st.lambda_hat.size(); ++j) {
      out += csv_field(expert_name(annotator_ids, j)) + "," + format_double(st.lambda_hat[j]) + "," +
             format_double(md[j]) + "," + (mr.empty() ? std::string() : format_double(mr[j])) + "," +
             (st.lambda_floored[j] ? "true" : "false") + "," + (st.city ? csv_field(*st.city) : "") +
             "\n";
    }
  }
  return out;
}

std::string test_report_csv(const TestReport& report) {
  std::string out = "city1,city2,original_p,minimal_p,median_p\n";
  for (const auto& p : report.pairs) {
    out += csv_field(p.a) + "," + csv_field(p.b) + "," + format_double(p.original.p) + "," +
           cell(p.min_p) + "," + cell(p.median_p) + "\n";
  }
  return out;
}

std::string test_report_detail_csv(const TestReport& report) {
  std::string out = "city1,city2,n1,n2,statistic,rank,df,p,reject,bootstrap_draws,bootstrap_flagged,minimal_p,median_p\n";
  auto size_of = [&](const std::string& g) -> std::string {
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
      if (report.groups[i] == g && i < report.group_sizes.size()) return std::to_string(report.group_sizes[i]);
    }
    return {};
  };
  for (const auto& p : report.pairs) {
    out += csv_field(p.a) + "," + csv_field(p.b) + "," + size_of(p.a) + "," + size_of(p.b) + "," +
           format_double(p.original.statistic) + "," + std::to_string(p.original.rank) + "," +
           format_double(p.original.df) + "," + format_double(p.original.p) + "," +
           (p.reject ? "true" : "false") + "," + std::to_string(p.boot_p.size()) + "," +
           std::to_string(p.boot_flagged) + "," + cell(p.min_p) + "," + cell(p.median_p) + "\n";
  }
  return out;
}

std::string test_report_matrix_csv(const TestReport& report) {
  const auto& g = report.groups;
  std::string out = "city";
  for (std::size_t c = 0; c + 1 < g.size(); ++c) out += "," + csv_field(g[c]);
  out += "\n";
  for (std::size_t r = 1; r < g.size(); ++r) {
    out += csv_field(g[r]);
    for (std::size_t c = 0; c + 1 < g.size(); ++c) {
      out += ",";
      if (c < r) {
        const auto* p = report.find(g[r], g[c]);
        if (p) out += format_double(p->original.p);
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace latent_truth
