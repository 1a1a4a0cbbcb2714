#include "latent_truth/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "latent_truth/error.hpp"
#include "latent_truth/rng.hpp"

namespace latent_truth {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](unsigned char c) { return std::isdigit(c); });
}

int parse_count(const std::string& field, const std::string& where) {
  int value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && field.front() == '-') {
    throw InputError(where + ": negative count '" + field + "'");
  }
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw InputError(where + ": count '" + field + "' is not a non-negative integer");
  }
  return value;
}

void check_labels_unique(const std::vector<std::string>& labels) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw InputError("empty class label");
    if (!seen.insert(l).second) throw InputError("duplicate class label '" + l + "'");
  }
}

std::optional<std::string> group_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

VoteTable parse_wide(std::istream& in, const std::vector<std::string>& header,
                     const LoadOptions& options, const std::string& source) {
  const bool has_city = header.size() >= 2 && header.back() == "city";
  const std::size_t n_label_cols = header.size() - 1 - (has_city ? 1 : 0);
  std::vector<std::string> file_labels(header.begin() + 1,
                                       header.begin() + 1 + static_cast<std::ptrdiff_t>(n_label_cols));
  if (file_labels.empty()) throw InputError(source + ": header has no class columns");
  check_labels_unique(file_labels);

  // Column position in the file -> class index in the table.
  std::vector<std::string> labels = options.labels.empty() ? file_labels : options.labels;
  std::vector<std::size_t> column_class(file_labels.size());
  for (std::size_t c = 0; c < file_labels.size(); ++c) {
    auto it = std::find(labels.begin(), labels.end(), file_labels[c]);
    if (it == labels.end()) {
      throw InputError(source + ": unknown class column '" + file_labels[c] + "'");
    }
    column_class[c] = static_cast<std::size_t>(it - labels.begin());
  }
  if (file_labels.size() != labels.size()) {
    throw InputError(source + ": header has " + std::to_string(file_labels.size()) +
                     " class columns, expected " + std::to_string(labels.size()));
  }

  std::vector<VoteRow> rows;
  int n_annotators = options.n_annotators;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw InputError(where + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    VoteRow row;
    row.image_id = fields[0];
    row.counts.assign(labels.size(), 0);
    int total = 0;
    for (std::size_t c = 0; c < file_labels.size(); ++c) {
      const int v = parse_count(fields[c + 1], where + " (image " + row.image_id + ")");
      row.counts[column_class[c]] = v;
      total += v;
    }
    if (has_city) row.group = group_field(fields.back());
    if (n_annotators == 0) n_annotators = total;
    if (total != n_annotators) {
      throw InputError(where + ": votes of image " + row.image_id + " sum to " +
                       std::to_string(total) + ", expected J=" + std::to_string(n_annotators));
    }
    rows.push_back(std::move(row));
  }
  return VoteTable(std::move(labels), n_annotators, std::move(rows));
}

VoteTable parse_long(std::istream& in, const std::vector<std::string>& header,
                     const LoadOptions& options, const std::string& source) {
  const bool has_city = header.size() == 4;
  struct Pending {
    std::string image_id;
    std::optional<std::string> group;
    std::vector<std::pair<std::string, std::string>> votes;  // annotator, label
  };
  std::vector<Pending> images;
  std::unordered_map<std::string, std::size_t> image_pos;
  std::set<std::string> vote_labels;
  std::set<std::string, decltype(&natural_less)> annotators(&natural_less);

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw InputError(where + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    auto [it, inserted] = image_pos.try_emplace(fields[0], images.size());
    if (inserted) {
      images.push_back({fields[0], has_city ? group_field(fields[3]) : std::nullopt, {}});
    }
    Pending& img = images[it->second];
    if (has_city && img.group != group_field(fields[3])) {
      throw InputError(where + ": image " + img.image_id + " has inconsistent city");
    }
    if (fields[1].empty()) throw InputError(where + ": empty annotator_id");
    img.votes.emplace_back(fields[1], fields[2]);
    vote_labels.insert(fields[2]);
    annotators.insert(fields[1]);
  }

  std::vector<std::string> labels = options.labels;
  if (labels.empty()) {
    labels.assign(vote_labels.begin(), vote_labels.end());
    std::sort(labels.begin(), labels.end(), natural_less);
  }
  check_labels_unique(labels);
  std::unordered_map<std::string, int> label_index;
  for (std::size_t k = 0; k < labels.size(); ++k) label_index[labels[k]] = static_cast<int>(k);

  std::vector<std::string> annotator_ids(annotators.begin(), annotators.end());
  std::unordered_map<std::string, std::size_t> annotator_index;
  for (std::size_t j = 0; j < annotator_ids.size(); ++j) annotator_index[annotator_ids[j]] = j;
  const int n_annotators = static_cast<int>(annotator_ids.size());
  if (options.n_annotators != 0 && !images.empty() && options.n_annotators != n_annotators) {
    throw InputError(source + ": found " + std::to_string(n_annotators) +
                     " annotators, expected J=" + std::to_string(options.n_annotators));
  }

  std::vector<VoteRow> rows;
  rows.reserve(images.size());
  for (const auto& img : images) {
    VoteRow row;
    row.image_id = img.image_id;
    row.group = img.group;
    row.counts.assign(labels.size(), 0);
    std::vector<int> per(static_cast<std::size_t>(n_annotators), -1);
    for (const auto& [annotator, label] : img.votes) {
      auto li = label_index.find(label);
      if (li == label_index.end()) {
        throw InputError(source + ": image " + img.image_id + " has vote for unknown class '" +
                         label + "'");
      }
      const std::size_t j = annotator_index.at(annotator);
      if (per[j] != -1) {
        throw InputError(source + ": image " + img.image_id + " has two votes from annotator " +
                         annotator);
      }
      per[j] = li->second;
      ++row.counts[static_cast<std::size_t>(li->second)];
    }
    for (std::size_t j = 0; j < per.size(); ++j) {
      if (per[j] == -1) {
        throw InputError(source + ": image " + img.image_id + " has votes from " +
                         std::to_string(img.votes.size()) + " annotators, expected J=" +
                         std::to_string(n_annotators) + " (missing " + annotator_ids[j] + ")");
      }
    }
    row.per_annotator = std::move(per);
    rows.push_back(std::move(row));
  }
  return VoteTable(std::move(labels), n_annotators, std::move(rows), std::move(annotator_ids));
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void warn_if_empty(const VoteTable& t, const std::string& what) {
  if (t.empty()) spdlog::warn("subset '{}' selected no images", what);
}

// Builds a table over `classes` (in the given order) from rows already known
// to have no votes outside them.
VoteTable restrict_columns(const VoteTable& table, std::span<const std::size_t> classes,
                           const std::vector<std::size_t>& keep_rows) {
  std::vector<int> remap(table.n_classes(), -1);
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    remap[classes[c]] = static_cast<int>(c);
    labels.push_back(table.class_labels()[classes[c]]);
  }
  std::vector<VoteRow> rows;
  rows.reserve(keep_rows.size());
  for (std::size_t i : keep_rows) {
    const VoteRow& src = table.row(i);
    VoteRow row;
    row.image_id = src.image_id;
    row.group = src.group;
    row.counts.assign(classes.size(), 0);
    for (std::size_t c = 0; c < classes.size(); ++c) row.counts[c] = src.counts[classes[c]];
    if (src.per_annotator) {
      std::vector<int> per(src.per_annotator->size());
      for (std::size_t j = 0; j < per.size(); ++j) {
        per[j] = remap[static_cast<std::size_t>((*src.per_annotator)[j])];
      }
      row.per_annotator = std::move(per);
    }
    rows.push_back(std::move(row));
  }
  return VoteTable(std::move(labels), table.n_annotators(), std::move(rows),
                   table.annotator_ids());
}

void check_stochastic_vector(std::span<const double> v, const std::string& name) {
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InputError(name + " has a negative or non-finite entry");
    s += x;
  }
  if (std::fabs(s - 1.0) > 1e-12) {
    throw InputError(name + " sums to " + std::to_string(s) + ", not 1 (tolerance 1e-12)");
  }
}

void check_confusion(const Matrix& theta, std::size_t K, const std::string& name) {
  if (static_cast<std::size_t>(theta.rows()) != K || static_cast<std::size_t>(theta.cols()) != K) {
    throw InputError(name + " must be " + std::to_string(K) + "x" + std::to_string(K));
  }
  for (std::size_t l = 0; l < K; ++l) {
    check_stochastic_vector({theta.row(static_cast<Eigen::Index>(l)).data(), K},
                            name + " row " + std::to_string(l + 1));
  }
}

}  // namespace

// ---- VoteTable ---------------------------------------------------------------

VoteTable::VoteTable(std::vector<std::string> class_labels, int n_annotators,
                     std::vector<VoteRow> rows, std::vector<std::string> annotator_ids)
    : labels_(std::move(class_labels)),
      n_annotators_(n_annotators),
      rows_(std::move(rows)),
      annotator_ids_(std::move(annotator_ids)) {
  check_labels_unique(labels_);
  if (n_annotators_ < 0) throw InputError("negative annotator count");
  const std::size_t K = labels_.size();
  for (const auto& row : rows_) {
    const std::string who = "image " + row.image_id;
    if (row.counts.size() != K) {
      throw InputError(who + ": " + std::to_string(row.counts.size()) + " counts, expected K=" +
                       std::to_string(K));
    }
    int total = 0;
    for (int c : row.counts) {
      if (c < 0) throw InputError(who + ": negative count");
      total += c;
    }
    if (total != n_annotators_) {
      throw InputError(who + ": votes sum to " + std::to_string(total) + ", expected J=" +
                       std::to_string(n_annotators_));
    }
    if (row.per_annotator) {
      if (row.per_annotator->size() != static_cast<std::size_t>(n_annotators_)) {
        throw InputError(who + ": per-annotator votes do not cover J annotators");
      }
      std::vector<int> hist(K, 0);
      for (int v : *row.per_annotator) {
        if (v < 0 || static_cast<std::size_t>(v) >= K) throw InputError(who + ": vote out of range");
        ++hist[static_cast<std::size_t>(v)];
      }
      if (hist != row.counts) throw InputError(who + ": per-annotator votes disagree with counts");
    }
  }
  if (!annotator_ids_.empty() &&
      annotator_ids_.size() != static_cast<std::size_t>(n_annotators_)) {
    throw InputError("annotator id list does not match J");
  }
}

bool VoteTable::has_per_annotator() const {
  if (rows_.empty()) return false;
  return std::all_of(rows_.begin(), rows_.end(),
                     [](const VoteRow& r) { return r.per_annotator.has_value(); });
}

bool VoteTable::has_groups() const {
  return std::any_of(rows_.begin(), rows_.end(),
                     [](const VoteRow& r) { return r.group.has_value(); });
}

std::vector<std::string> VoteTable::groups() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows_) {
    if (r.group && seen.insert(*r.group).second) out.push_back(*r.group);
  }
  return out;
}

std::vector<double> VoteTable::vote_frequencies() const {
  std::vector<double> f(n_classes(), 0.0);
  double total = 0.0;
  for (const auto& r : rows_) {
    for (std::size_t k = 0; k < f.size(); ++k) f[k] += r.counts[k];
    total += n_annotators_;
  }
  if (total > 0) {
    for (auto& v : f) v /= total;
  }
  return f;
}

VoteTable VoteTable::select(std::span<const std::size_t> indices) const {
  VoteTable out;
  out.labels_ = labels_;
  out.n_annotators_ = n_annotators_;
  out.annotator_ids_ = annotator_ids_;
  out.rows_.reserve(indices.size());
  for (std::size_t i : indices) out.rows_.push_back(rows_.at(i));
  return out;
}

PatternIndex PatternIndex::build(const VoteTable& table) {
  PatternIndex idx;
  idx.n_classes = table.n_classes();
  idx.row_pattern.resize(table.size());
  std::map<std::vector<int>, std::size_t> seen;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& counts = table.row(i).counts;
    auto [it, inserted] = seen.try_emplace(counts, idx.multiplicity.size());
    if (inserted) {
      idx.patterns.insert(idx.patterns.end(), counts.begin(), counts.end());
      idx.multiplicity.push_back(0);
      idx.first_row.push_back(i);
    }
    ++idx.multiplicity[it->second];
    idx.row_pattern[i] = it->second;
  }
  return idx;
}

// ---- CSV I/O -----------------------------------------------------------------

bool natural_less(const std::string& a, const std::string& b) {
  const bool na = is_number(a), nb = is_number(b);
  if (na != nb) return na;
  if (na) {
    // Compare by value without overflow: strip leading zeros, then length.
    auto strip = [](const std::string& s) {
      const auto p = s.find_first_not_of('0');
      return p == std::string::npos ? std::string("0") : s.substr(p);
    };
    const std::string sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

CsvFormat detect_format(const std::string& header_line) {
  std::string line = header_line;
  strip_cr(line);
  const auto h = split_csv_line(line);
  if ((h.size() == 3 || h.size() == 4) && h[0] == "image_id" && h[1] == "annotator_id" &&
      h[2] == "vote" && (h.size() == 3 || h[3] == "city")) {
    return CsvFormat::long_format;
  }
  return CsvFormat::wide;
}

VoteTable parse_votes(const std::string& text, const LoadOptions& options,
                      const std::string& source) {
  std::istringstream in(text);
  std::string header_line;
  if (!std::getline(in, header_line)) throw InputError(source + ": missing header line");
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header_line.erase(0, 3);
  }
  strip_cr(header_line);
  const auto header = split_csv_line(header_line);
  if (header.empty() || header[0] != "image_id") {
    throw InputError(source + ": header must start with 'image_id'");
  }
  if (detect_format(header_line) == CsvFormat::long_format) {
    return parse_long(in, header, options, source);
  }
  return parse_wide(in, header, options, source);
}

VoteTable load_votes(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_votes(buf.str(), options, path.string());
}

std::string format_votes_wide(const VoteTable& table) {
  std::vector<std::string> header{"image_id"};
  header.insert(header.end(), table.class_labels().begin(), table.class_labels().end());
  const bool city = table.has_groups();
  if (city) header.emplace_back("city");
  std::string out = join(header) + "\n";
  for (const auto& r : table.rows()) {
    out += r.image_id;
    for (int c : r.counts) {
      out += ',';
      out += std::to_string(c);
    }
    if (city) {
      out += ',';
      out += r.group.value_or("");
    }
    out += '\n';
  }
  return out;
}

std::string format_votes_long(const VoteTable& table) {
  if (!table.empty() && !table.has_per_annotator()) {
    throw InputError("long-format output needs per-annotator votes");
  }
  const bool city = table.has_groups();
  std::string out = city ? "image_id,annotator_id,vote,city\n" : "image_id,annotator_id,vote\n";
  const auto& ids = table.annotator_ids();
  for (const auto& r : table.rows()) {
    const auto& per = *r.per_annotator;
    for (std::size_t j = 0; j < per.size(); ++j) {
      out += r.image_id;
      out += ',';
      out += ids.empty() ? std::to_string(j + 1) : ids[j];
      out += ',';
      out += table.class_labels()[static_cast<std::size_t>(per[j])];
      if (city) {
        out += ',';
        out += r.group.value_or("");
      }
      out += '\n';
    }
  }
  return out;
}

void save_votes_wide(const VoteTable& table, const std::filesystem::path& path) {
  write_file(path, format_votes_wide(table));
}

void save_votes_long(const VoteTable& table, const std::filesystem::path& path) {
  write_file(path, format_votes_long(table));
}

// ---- Synthetic generation ------------------------------------------------------

int GroundTruthSpec::annotators() const {
  return expert_thetas.empty() ? n_annotators : static_cast<int>(expert_thetas.size());
}

std::vector<std::string> GroundTruthSpec::resolved_labels() const {
  if (!labels.empty()) return labels;
  std::vector<std::string> out;
  for (Eigen::Index k = 0; k < pi_true.size(); ++k) out.push_back(std::to_string(k + 1));
  return out;
}

void GroundTruthSpec::validate() const {
  const auto K = static_cast<std::size_t>(pi_true.size());
  if (K == 0) throw InputError("pi_true is empty");
  if (!labels.empty() && labels.size() != K) throw InputError("labels must have K entries");
  if (!labels.empty()) check_labels_unique(labels);
  check_stochastic_vector({pi_true.data(), K}, "pi_true");
  check_confusion(theta_true, K, "theta_true");
  for (std::size_t j = 0; j < expert_thetas.size(); ++j) {
    check_confusion(expert_thetas[j], K, "expert_thetas[" + std::to_string(j) + "]");
  }
  if (annotators() <= 0) throw InputError("number of annotators must be positive");
  std::set<std::string> names;
  for (const auto& g : groups) {
    if (g.name.empty()) throw InputError("group name is empty");
    if (!names.insert(g.name).second) throw InputError("duplicate group '" + g.name + "'");
    if (g.pi) {
      if (static_cast<std::size_t>(g.pi->size()) != K) throw InputError("group " + g.name + ": pi must have K entries");
      check_stochastic_vector({g.pi->data(), K}, "group " + g.name + " pi");
    }
    if (g.theta) check_confusion(*g.theta, K, "group " + g.name + " theta");
  }
}

GeneratedData generate(const GroundTruthSpec& spec) {
  spec.validate();
  const auto K = static_cast<std::size_t>(spec.pi_true.size());
  const int J = spec.annotators();

  struct Block {
    std::optional<std::string> group;
    std::size_t n;
    const Vector* pi;
    const Matrix* theta;
  };
  std::vector<Block> blocks;
  if (spec.groups.empty()) {
    blocks.push_back({std::nullopt, spec.n_images, &spec.pi_true, &spec.theta_true});
  } else {
    for (const auto& g : spec.groups) {
      blocks.push_back({g.name, g.n_images, g.pi ? &*g.pi : &spec.pi_true,
                        g.theta ? &*g.theta : &spec.theta_true});
    }
  }

  GeneratedData out;
  std::vector<VoteRow> rows;
  std::size_t i = 0;
  for (const auto& b : blocks) {
    for (std::size_t m = 0; m < b.n; ++m, ++i) {
      CounterRng rng(derive_seed(spec.seed, "generate/image", i));
      const auto z = rng.categorical({b.pi->data(), K});
      VoteRow row;
      row.image_id = std::to_string(i + 1);
      row.group = b.group;
      row.counts.assign(K, 0);
      std::vector<int> per(static_cast<std::size_t>(J));
      for (int j = 0; j < J; ++j) {
        const Matrix& theta = spec.expert_thetas.empty()
                                  ? *b.theta
                                  : spec.expert_thetas[static_cast<std::size_t>(j)];
        const auto v = rng.categorical({theta.row(static_cast<Eigen::Index>(z)).data(), K});
        per[static_cast<std::size_t>(j)] = static_cast<int>(v);
        ++row.counts[v];
      }
      row.per_annotator = std::move(per);
      rows.push_back(std::move(row));
      out.latent.push_back(static_cast<int>(z));
    }
  }
  std::vector<std::string> annotator_ids;
  for (int j = 0; j < J; ++j) annotator_ids.push_back(std::to_string(j + 1));
  out.table = VoteTable(spec.resolved_labels(), J, std::move(rows), std::move(annotator_ids));
  return out;
}

// ---- Majority vote and subsetting ----------------------------------------------

std::size_t majority_class(const VoteRow& row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.counts.size(); ++k) {
    if (row.counts[k] > row.counts[best]) best = k;
  }
  return best;
}

ClassPartition lcz_partition(const std::vector<std::string>& labels) {
  ClassPartition p;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    (is_number(labels[k]) ? p.urban : p.nonurban).push_back(k);
  }
  if (p.urban.empty() || p.nonurban.empty()) {
    throw InputError("labels do not split into numeric (urban) and alphabetic (non-urban) classes");
  }
  return p;
}

SubsetScheme parse_scheme(const std::string& text) {
  if (text == "binary") return {SchemeKind::binary, {}};
  if (text == "urban" || text == "urban-only") return {SchemeKind::urban_only, {}};
  if (text == "nonurban" || text == "nonurban-only") return {SchemeKind::nonurban_only, {}};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const std::string arg = text.substr(colon + 1);
    if (arg.empty()) throw InputError("scheme '" + text + "' needs an argument");
    if (head == "drop-class") return {SchemeKind::drop_class, arg};
    if (head == "group") return {SchemeKind::group, arg};
  }
  throw InputError("unknown subset scheme '" + text + "'");
}

VoteTable subset_binary(const VoteTable& table, const ClassPartition& partition) {
  if (partition.urban.size() + partition.nonurban.size() != table.n_classes()) {
    throw InputError("class partition does not cover all classes");
  }
  std::vector<int> side(table.n_classes(), -1);
  for (auto k : partition.urban) side.at(k) = 0;
  for (auto k : partition.nonurban) side.at(k) = 1;
  if (std::find(side.begin(), side.end(), -1) != side.end()) {
    throw InputError("class partition does not cover all classes");
  }
  std::vector<VoteRow> rows;
  rows.reserve(table.size());
  for (const auto& src : table.rows()) {
    VoteRow row;
    row.image_id = src.image_id;
    row.group = src.group;
    row.counts.assign(2, 0);
    for (std::size_t k = 0; k < src.counts.size(); ++k) {
      row.counts[static_cast<std::size_t>(side[k])] += src.counts[k];
    }
    if (src.per_annotator) {
      std::vector<int> per;
      per.reserve(src.per_annotator->size());
      for (int v : *src.per_annotator) per.push_back(side[static_cast<std::size_t>(v)]);
      row.per_annotator = std::move(per);
    }
    rows.push_back(std::move(row));
  }
  VoteTable out({"urban", "nonurban"}, table.n_annotators(), std::move(rows),
                table.annotator_ids());
  warn_if_empty(out, "binary");
  return out;
}

VoteTable subset_within(const VoteTable& table, std::span<const std::size_t> classes) {
  std::vector<bool> inside(table.n_classes(), false);
  for (auto k : classes) {
    if (k >= table.n_classes()) throw InputError("class index out of range in subset");
    inside[k] = true;
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& r = table.row(i);
    if (!inside[majority_class(r)]) continue;
    bool all_inside = true;
    for (std::size_t k = 0; k < r.counts.size(); ++k) {
      if (r.counts[k] > 0 && !inside[k]) all_inside = false;
    }
    if (all_inside) keep.push_back(i);
  }
  VoteTable out = restrict_columns(table, classes, keep);
  warn_if_empty(out, "within-partition");
  return out;
}

VoteTable subset_drop_class(const VoteTable& table, std::size_t k) {
  if (k >= table.n_classes()) throw InputError("drop-class index out of range");
  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < table.n_classes(); ++c) {
    if (c != k) classes.push_back(c);
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.row(i).counts[k] == 0) keep.push_back(i);
  }
  VoteTable out = restrict_columns(table, classes, keep);
  warn_if_empty(out, "drop-class " + table.class_labels()[k]);
  return out;
}

VoteTable subset_group(const VoteTable& table, const std::string& group) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.row(i).group == group) keep.push_back(i);
  }
  VoteTable out = table.select(keep);
  warn_if_empty(out, "group " + group);
  return out;
}

std::size_t class_index(const VoteTable& table, const std::string& label) {
  const auto& labels = table.class_labels();
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw InputError("unknown class label '" + label + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

VoteTable subset(const VoteTable& table, const SubsetScheme& scheme) {
  switch (scheme.kind) {
    case SchemeKind::binary:
      return subset_binary(table, lcz_partition(table.class_labels()));
    case SchemeKind::urban_only:
      return subset_within(table, lcz_partition(table.class_labels()).urban);
    case SchemeKind::nonurban_only:
      return subset_within(table, lcz_partition(table.class_labels()).nonurban);
    case SchemeKind::drop_class:
      return subset_drop_class(table, class_index(table, scheme.argument));
    case SchemeKind::group:
      return subset_group(table, scheme.argument);
  }
  throw InputError("unknown subset scheme");
}

VoteTable drop_annotator(const VoteTable& table, std::size_t j) {
  if (!table.has_per_annotator()) {
    throw InputError("individual votes are required; provide long-format input "
                     "(image_id,annotator_id,vote,city)");
  }
  if (j >= static_cast<std::size_t>(table.n_annotators())) {
    throw InputError("annotator index out of range");
  }
  std::vector<VoteRow> rows;
  rows.reserve(table.size());
  for (const auto& src : table.rows()) {
    VoteRow row = src;
    auto& per = *row.per_annotator;
    --row.counts[static_cast<std::size_t>(per[j])];
    per.erase(per.begin() + static_cast<std::ptrdiff_t>(j));
    rows.push_back(std::move(row));
  }
  std::vector<std::string> ids = table.annotator_ids();
  if (!ids.empty()) ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(j));
  return VoteTable(table.class_labels(), table.n_annotators() - 1, std::move(rows),
                   std::move(ids));
}

TableStats summarize(const VoteTable& table) {
  TableStats s;
  s.n_images = table.size();
  s.n_classes = table.n_classes();
  s.n_annotators = table.n_annotators();
  s.vote_frequencies = table.vote_frequencies();
  std::size_t unanimous = 0;
  for (const auto& r : table.rows()) {
    if (r.counts[majority_class(r)] == table.n_annotators()) ++unanimous;
  }
  s.unanimous_fraction = table.empty() ? 0.0 : static_cast<double>(unanimous) / table.size();
  s.distinct_patterns = PatternIndex::build(table).n_patterns();
  std::map<std::string, std::size_t> sizes;
  for (const auto& r : table.rows()) {
    if (r.group) ++sizes[*r.group];
  }
  for (const auto& g : table.groups()) s.group_sizes.emplace_back(g, sizes[g]);
  return s;
}

}  // namespace latent_truth
