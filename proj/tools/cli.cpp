#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "latent_truth/analysis.hpp"
#include "latent_truth/data.hpp"
#include "latent_truth/error.hpp"
#include "latent_truth/rng.hpp"
#include "latent_truth/serialize.hpp"

namespace latent_truth::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = LATENT_TRUTH_VERSION;

struct Options {
  std::string input;
  std::string spec;
  std::string manifest;
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  int t_total = 300;
  int t_burnin = 100;
  unsigned jobs = 0;
  double smoothing = 0.0;
  bool store_z = false;
  std::string labels;
  std::string drop_class;
  std::string scheme;
  bool rubin_unscaled = false;
  // experts
  int b_reps = 200;
  int outer = 0;
  bool randomized = false;
  bool per_city = false;
  // cities
  int bootstrap = 0;
  std::string test = "pooled-t";
  double level = 0.05;
};

// Collects outputs and their hashes for the manifest.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    Json entry;
    entry["path"] = name;
    entry["fnv1a"] = fnv1a_hex(content);
    list_.push_back(std::move(entry));
  }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  const fs::path& dir() const { return dir_; }
  const Json& list() const { return list_; }

 private:
  fs::path dir_;
  Json list_ = Json::array();
};

struct Context {
  std::string command;
  std::vector<std::string> args;  // as recorded in the manifest
  Options opt;
  bool seed_given = false;
  bool output_dir_given = false;
  bool jobs_given = false;
  std::optional<fs::path> input_path;
  std::string input_hash;
  Json config = Json::object();
};

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::get("latent_truth");
  if (!logger) logger = spdlog::stderr_color_mt("latent_truth");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("LATENT_TRUTH_LOG")) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only accept a real "off".
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::warn;
  }
  spdlog::set_level(level);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// Path-valued flags are stored absolute so a manifest replays from any cwd.
std::vector<std::string> absolutize(const std::vector<std::string>& args) {
  static const std::vector<std::string> path_flags{"--input", "--spec", "--output-dir", "--manifest"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    bool handled = false;
    for (const auto& f : path_flags) {
      if (a == f && i + 1 < args.size()) {
        out.push_back(a);
        out.push_back(fs::absolute(args[++i]).lexically_normal().string());
        handled = true;
      } else if (a.rfind(f + "=", 0) == 0) {
        out.push_back(f);
        out.push_back(fs::absolute(a.substr(f.size() + 1)).lexically_normal().string());
        handled = true;
      }
      if (handled) break;
    }
    if (!handled) out.push_back(a);
  }
  return out;
}

// Sets `flag value` in a recorded command line, replacing any earlier value.
std::vector<std::string> with_option(const std::vector<std::string>& args, const std::string& flag,
                                     const std::string& value) {
  std::vector<std::string> out;
  bool replaced = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == flag && i + 1 < args.size()) {
      out.push_back(args[i]);
      out.push_back(value);
      ++i;
      replaced = true;
    } else if (args[i].rfind(flag + "=", 0) == 0) {
      out.push_back(flag);
      out.push_back(value);
      replaced = true;
    } else {
      out.push_back(args[i]);
    }
  }
  if (!replaced) {
    out.push_back(flag);
    out.push_back(value);
  }
  return out;
}

VoteTable load_table(Context& ctx) {
  if (ctx.opt.input.empty()) throw InputError("--input is required");
  ctx.input_path = fs::absolute(ctx.opt.input).lexically_normal();
  const std::string text = read_file(*ctx.input_path);
  ctx.input_hash = fnv1a_hex(text);
  LoadOptions lo;
  lo.labels = split_list(ctx.opt.labels);
  VoteTable table = parse_votes(text, lo, ctx.opt.input);
  if (!ctx.opt.drop_class.empty()) {
    table = subset_drop_class(table, class_index(table, ctx.opt.drop_class));
  }
  if (!ctx.opt.scheme.empty()) table = subset(table, parse_scheme(ctx.opt.scheme));
  if (table.empty()) throw InputError("no images left after subsetting");
  ctx.config["n_images"] = table.size();
  ctx.config["n_classes"] = table.n_classes();
  ctx.config["n_annotators"] = table.n_annotators();
  return table;
}

SemConfig sem_config(Context& ctx) {
  SemConfig sem;
  sem.t_total = ctx.opt.t_total;
  sem.t_burnin = ctx.opt.t_burnin;
  sem.smoothing = ctx.opt.smoothing;
  sem.store_z = ctx.opt.store_z;
  sem.validate();
  ctx.config["T"] = sem.t_total;
  ctx.config["burnin"] = sem.t_burnin;
  ctx.config["smoothing"] = sem.smoothing;
  ctx.config["init"] = "majority-vote";
  ctx.config["init_smoothing"] = sem.init_smoothing;
  if (!ctx.opt.drop_class.empty()) ctx.config["drop_class"] = ctx.opt.drop_class;
  if (!ctx.opt.scheme.empty()) ctx.config["scheme"] = ctx.opt.scheme;
  return sem;
}

std::string posteriors_csv(const VoteTable& table, const PosteriorMatrix& tau) {
  std::string out = "image_id";
  for (const auto& l : table.class_labels()) out += "," + l;
  out += ",map_class\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += table.row(i).image_id;
    Eigen::Index best = 0;
    for (Eigen::Index k = 0; k < tau.tau.cols(); ++k) {
      out += "," + format_double(tau.tau(r, k));
      if (tau.tau(r, k) > tau.tau(r, best)) best = k;
    }
    out += "," + table.class_labels()[static_cast<std::size_t>(best)] + "\n";
  }
  return out;
}

Json fit_summary(const GroupFit& fit, const VoteTable& table) {
  Json j;
  if (!fit.name.empty()) j["name"] = fit.name;
  j["n_images"] = table.size();
  j["n_annotators"] = table.n_annotators();
  j["params"] = params_to_json(fit.params(), table.class_labels());
  j["permutation"] = permutation_to_json(fit.relabel);
  j["relabel_flagged"] = fit.relabel.flagged;
  j["zero_class_events"] = fit.trace.zero_class_events();
  Json flagged = Json::array();
  for (std::size_t l = 0; l < fit.variance.flagged_blocks.size(); ++l) {
    if (fit.variance.flagged_blocks[l]) flagged.push_back(table.class_labels()[l]);
  }
  j["variance_flagged_classes"] = std::move(flagged);
  const auto ll = log_likelihood(table, fit.params());
  j["final_loglik"] = ll.impossible ? Json(nullptr) : Json(ll.value);
  return j;
}

void cmd_fit(Context& ctx, Outputs& out) {
  const VoteTable table = load_table(ctx);
  SemConfig sem = sem_config(ctx);
  sem.seed = derive_seed(ctx.opt.seed, "fit/sem");
  RubinOptions rubin;
  rubin.annotator_scaled = !ctx.opt.rubin_unscaled;
  ctx.config["rubin_annotator_scaled"] = rubin.annotator_scaled;
  const GroupFit fit = fit_and_label(table, sem, rubin);

  out.write_json("params.json", params_to_json(fit.params(), table.class_labels()));
  out.write("confusion.csv", confusion_csv(fit.params(), table.class_labels(), table.vote_frequencies()));
  out.write("trace.jsonl", trace_jsonl(fit.trace));
  out.write_json("variance.json", variance_to_json(fit.variance));
  out.write("posteriors.csv", posteriors_csv(table, posterior(table, fit.params())));
  out.write_json("fit_summary.json", fit_summary(fit, table));
  if (sem.store_z) {
    std::string z;
    for (std::size_t t = 0; t < fit.trace.z_per_iter.size(); ++t) {
      Json line;
      line["t"] = t + 1;
      Json classes = Json::array();
      for (int c : fit.trace.z_per_iter[t]) classes.push_back(table.class_labels()[static_cast<std::size_t>(c)]);
      line["z"] = std::move(classes);
      z += line.dump() + "\n";
    }
    out.write("assignments.jsonl", z);
  }
}

ExpertConfig expert_config(Context& ctx) {
  ExpertConfig cfg;
  cfg.sem = sem_config(ctx);
  cfg.b_reps = ctx.opt.b_reps;
  cfg.randomized = ctx.opt.randomized;
  cfg.per_city = ctx.opt.per_city;
  cfg.seed = ctx.opt.seed;
  cfg.jobs = ctx.opt.jobs;
  if (cfg.b_reps < 1) throw InputError("--B must be at least 1");
  ctx.config["B"] = cfg.b_reps;
  ctx.config["randomized"] = cfg.randomized;
  ctx.config["per_city"] = cfg.per_city;
  ctx.config["outer"] = ctx.opt.outer;
  return cfg;
}

void write_expert_outputs(Outputs& out, const std::string& prefix, const ExpertAnalysis& a,
                          const VoteTable& table) {
  std::vector<ExpertStat> stats{a.overall};
  stats.insert(stats.end(), a.per_city.begin(), a.per_city.end());
  out.write(prefix + "expert_d.csv", expert_stat_csv(stats, table.annotator_ids()));
  out.write(prefix + "expert_summary.csv", expert_summary_csv(stats, table.annotator_ids()));
}

void cmd_experts(Context& ctx, Outputs& out) {
  const VoteTable table = load_table(ctx);
  if (!table.has_per_annotator()) {
    throw InputError("experts needs individual votes: pass long-format input with header "
                     "image_id,annotator_id,vote[,city] (simulate writes votes_long.csv)");
  }
  const ExpertConfig cfg = expert_config(ctx);
  const ExpertAnalysis base = expert_analysis(table, cfg);
  write_expert_outputs(out, "", base, table);
  Json ref = fit_summary(base.reference, table);
  ref["relabel_flagged_any"] = base.relabel_flagged;
  out.write_json("reference_fit.json", ref);

  if (ctx.opt.outer > 0) {
    const auto draws = expert_bootstrap_outer(table, cfg, ctx.opt.outer);
    std::string summary = "draw,expert,mean_d,mean_randomized_d,has_max_mean_d,relabel_flagged\n";
    for (const auto& d : draws) {
      const std::string prefix = fmt::format("outer/draw_{:03d}_", d.b + 1);
      write_expert_outputs(out, prefix, d.analysis, table);
      const auto md = d.analysis.overall.mean_d();
      const auto mr = d.analysis.overall.mean_randomized_d();
      const auto best = static_cast<std::size_t>(std::max_element(md.begin(), md.end()) - md.begin());
      for (std::size_t j = 0; j < md.size(); ++j) {
        const std::string name =
            j < table.annotator_ids().size() ? table.annotator_ids()[j] : std::to_string(j + 1);
        summary += std::to_string(d.b + 1) + "," + name + "," + format_double(md[j]) + "," +
                   (mr.empty() ? std::string() : format_double(mr[j])) + "," +
                   (j == best ? "true" : "false") + "," + (d.relabel_flagged ? "true" : "false") + "\n";
      }
    }
    out.write("outer_summary.csv", summary);
  }
}

void cmd_cities(Context& ctx, Outputs& out) {
  const VoteTable table = load_table(ctx);
  CityConfig cfg;
  cfg.sem = sem_config(ctx);
  cfg.rubin.annotator_scaled = !ctx.opt.rubin_unscaled;
  cfg.bootstrap = ctx.opt.bootstrap;
  cfg.seed = ctx.opt.seed;
  cfg.jobs = ctx.opt.jobs;
  cfg.level = ctx.opt.level;
  if (ctx.opt.test == "pooled-t") {
    cfg.kind = CityTestKind::pooled_t;
  } else if (ctx.opt.test == "bonferroni") {
    cfg.kind = CityTestKind::bonferroni_z;
  } else {
    throw InputError("--test must be pooled-t or bonferroni");
  }
  if (cfg.bootstrap < 0) throw InputError("--bootstrap must be >= 0");
  ctx.config["bootstrap"] = cfg.bootstrap;
  ctx.config["test"] = ctx.opt.test;
  ctx.config["level"] = cfg.level;
  ctx.config["rubin_annotator_scaled"] = cfg.rubin.annotator_scaled;

  const TestReport report = city_tests(table, cfg);
  out.write("city_tests.csv", test_report_csv(report));
  out.write("city_tests_detail.csv", test_report_detail_csv(report));
  out.write("city_pvalues_matrix.csv", test_report_matrix_csv(report));
  Json fits = Json::array();
  for (const auto& f : report.fits) fits.push_back(fit_summary(f, subset_group(table, f.name)));
  out.write_json("group_fits.json", fits);
}

void cmd_simulate(Context& ctx, Outputs& out) {
  if (ctx.opt.spec.empty()) throw InputError("--spec is required");
  ctx.input_path = fs::absolute(ctx.opt.spec).lexically_normal();
  const std::string text = read_file(*ctx.input_path);
  ctx.input_hash = fnv1a_hex(text);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("spec is not valid JSON: ") + e.what());
  }
  GroundTruthSpec spec = spec_from_json(j);
  if (ctx.seed_given) spec.seed = ctx.opt.seed;
  ctx.config["spec_seed"] = spec.seed;
  const GeneratedData data = generate(spec);

  out.write("votes_wide.csv", format_votes_wide(data.table));
  out.write("votes_long.csv", format_votes_long(data.table));
  const auto labels = data.table.class_labels();
  std::string truth = "image_id,true_class";
  if (data.table.has_groups()) truth += ",city";
  truth += "\n";
  for (std::size_t i = 0; i < data.table.size(); ++i) {
    const auto& r = data.table.row(i);
    truth += r.image_id + "," + labels[static_cast<std::size_t>(data.latent[i])];
    if (r.group) truth += "," + *r.group;
    truth += "\n";
  }
  out.write("truth.csv", truth);
  out.write_json("truth.json", spec_to_json(spec));
}

void cmd_stats(Context& ctx, Outputs& out) {
  const VoteTable table = load_table(ctx);
  const TableStats s = summarize(table);
  Json j;
  j["n_images"] = s.n_images;
  j["n_classes"] = s.n_classes;
  j["n_annotators"] = s.n_annotators;
  j["labels"] = table.class_labels();
  j["unanimous_fraction"] = s.unanimous_fraction;
  j["distinct_patterns"] = s.distinct_patterns;
  j["vote_frequencies"] = s.vote_frequencies;
  Json groups = Json::object();
  for (const auto& [name, n] : s.group_sizes) groups[name] = n;
  j["group_sizes"] = std::move(groups);
  out.write_json("stats.json", j);
}

int execute(Context& ctx);

int cmd_replay(Context& ctx) {
  if (ctx.opt.manifest.empty()) throw InputError("--manifest is required");
  Json m;
  try {
    m = Json::parse(read_file(ctx.opt.manifest));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!m.contains("args") || !m.contains("outputs")) throw InputError("manifest lacks args/outputs");
  std::vector<std::string> args = m.at("args").get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw InputError("cannot replay a replay manifest");
  if (m.contains("input") && m["input"].contains("path")) {
    const std::string path = m["input"]["path"].get<std::string>();
    const std::string now = fnv1a_hex(read_file(path));
    if (now != m["input"]["fnv1a"].get<std::string>()) {
      throw InputError("input '" + path + "' changed since the manifest was written");
    }
  }
  const std::string dir = ctx.opt.output_dir;
  const bool dir_given = ctx.output_dir_given;
  if (dir_given) args = with_option(args, "--output-dir", fs::absolute(dir).lexically_normal().string());
  if (ctx.jobs_given) {
    if (args.empty() || args.front() == "simulate" || args.front() == "stats") {
      spdlog::info("replay: --jobs has no effect on this command");
    } else {
      args = with_option(args, "--jobs", std::to_string(ctx.opt.jobs));
    }
  }

  const int rc = run(args);
  if (rc != kOk) return rc;

  const fs::path out_dir = dir_given ? fs::absolute(dir) : fs::path(m.value("output_dir", std::string(".")));
  std::size_t mismatches = 0;
  for (const auto& o : m.at("outputs")) {
    const auto name = o.at("path").get<std::string>();
    const fs::path p = out_dir / name;
    const std::string got = fs::exists(p) ? fnv1a_hex(read_file(p)) : std::string("missing");
    if (got != o.at("fnv1a").get<std::string>()) {
      std::cerr << "replay mismatch: " << name << "\n";
      ++mismatches;
    }
  }
  if (mismatches > 0) return kFailure;
  std::cout << "replay ok: " << m.at("outputs").size() << " outputs identical\n";
  return kOk;
}

int execute(Context& ctx) {
  if (ctx.command == "replay") return cmd_replay(ctx);
  const auto start = std::chrono::steady_clock::now();
  Outputs out(ctx.opt.output_dir);
  if (ctx.command == "fit") {
    cmd_fit(ctx, out);
  } else if (ctx.command == "experts") {
    cmd_experts(ctx, out);
  } else if (ctx.command == "cities") {
    cmd_cities(ctx, out);
  } else if (ctx.command == "simulate") {
    cmd_simulate(ctx, out);
  } else if (ctx.command == "stats") {
    cmd_stats(ctx, out);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json m;
  m["command"] = ctx.command;
  m["args"] = ctx.args;
  m["config"] = ctx.config;
  m["seed"] = ctx.opt.seed;
  m["jobs"] = ctx.opt.jobs;
  if (ctx.input_path) {
    m["input"] = {{"path", ctx.input_path->string()}, {"fnv1a", ctx.input_hash}};
  }
  m["output_dir"] = fs::absolute(out.dir()).lexically_normal().string();
  m["outputs"] = out.list();
  m["timings"] = {{"total_seconds", seconds}};
  m["version"] = kVersion;
  write_file(out.dir() / "manifest.json", m.dump(2) + "\n");
  return kOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--output-dir", o.output_dir, "Directory for outputs")->capture_default_str();
  sub->add_option("--seed", o.seed, "Master seed")->capture_default_str();
}

void add_input(CLI::App* sub, Options& o) {
  sub->add_option("--input", o.input, "Vote CSV (wide or long format)")->required();
  sub->add_option("--labels", o.labels, "Comma-separated class labels in canonical order");
  sub->add_option("--drop-class", o.drop_class, "Remove a class and every image voted into it");
  sub->add_option("--scheme", o.scheme, "binary, urban, nonurban, drop-class:<k> or group:<s>");
}

void add_sem(CLI::App* sub, Options& o) {
  sub->add_option("--T", o.t_total, "SEM iterations")->capture_default_str();
  sub->add_option("--burnin", o.t_burnin, "Burn-in iterations")->capture_default_str();
  sub->add_option("--smoothing", o.smoothing, "M-step smoothing constant")->capture_default_str();
  sub->add_flag("--store-z", o.store_z, "Keep per-iteration class assignments");
  sub->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  setup_logging();
  Context ctx;
  Options& o = ctx.opt;
  CLI::App app{"Latent true classes and confusion matrices from multi-annotator votes", "latent-truth"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* fit = app.add_subcommand("fit", "Fit the mixture and write the confusion matrix");
  add_common(fit, o);
  add_input(fit, o);
  add_sem(fit, o);
  fit->add_flag("--rubin-unscaled", o.rubin_unscaled, "Within-variance divides by n_l instead of J*n_l");

  auto* experts = app.add_subcommand("experts", "Expert heterogeneity bootstrap");
  add_common(experts, o);
  add_input(experts, o);
  add_sem(experts, o);
  experts->add_option("--B", o.b_reps, "Inner bootstrap draws")->capture_default_str();
  experts->add_option("--outer", o.outer, "Outer bootstrap draws (refits)")->capture_default_str();
  experts->add_flag("--randomized", o.randomized, "Also compute the randomized-vote baseline");
  experts->add_flag("--per-city", o.per_city, "Split the statistics by city");

  auto* cities = app.add_subcommand("cities", "Pairwise city tests");
  add_common(cities, o);
  add_input(cities, o);
  add_sem(cities, o);
  cities->add_option("--bootstrap,--B", o.bootstrap, "Outer bootstrap draws")->capture_default_str();
  cities->add_option("--test", o.test, "pooled-t or bonferroni")->capture_default_str();
  cities->add_option("--level", o.level, "Rejection level")->capture_default_str();
  cities->add_flag("--rubin-unscaled", o.rubin_unscaled, "Within-variance divides by n_l instead of J*n_l");

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic votes from a JSON spec");
  add_common(simulate, o);
  simulate->add_option("--spec", o.spec, "Ground-truth spec (JSON)")->required();

  auto* stats = app.add_subcommand("stats", "Summary statistics of a vote table");
  add_common(stats, o);
  add_input(stats, o);

  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
  replay->add_option("--manifest", o.manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--output-dir", o.output_dir, "Write to this directory instead");
  replay->add_option("--jobs", o.jobs, "Override the recorded worker count");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  for (auto* sub : app.get_subcommands()) ctx.command = sub->get_name();
  auto* chosen = app.get_subcommand(ctx.command);
  ctx.seed_given = chosen->get_option_no_throw("--seed") && chosen->count("--seed") > 0;
  ctx.output_dir_given = chosen->count("--output-dir") > 0;
  ctx.jobs_given = chosen->get_option_no_throw("--jobs") && chosen->count("--jobs") > 0;
  ctx.args = absolutize(args);

  try {
    return execute(ctx);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const DegenerateModelError& e) {
    std::cerr << "degenerate model: " << e.what() << "\n";
    return kDegenerateModel;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace latent_truth::cli
