#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latent_truth/types.hpp"

namespace latent_truth {

/// One image: the vote-count vector Y plus optional group tag and the
/// individual votes behind it.
struct VoteRow {
  std::string image_id;
  std::vector<int> counts;
  std::optional<std::string> group;
  // Class index (0-based) voted by each annotator, in annotator order.
  std::optional<std::vector<int>> per_annotator;

  bool operator==(const VoteRow&) const = default;
};

/// Validated multi-annotator vote data. Immutable once constructed: every
/// row has K non-negative counts summing to J, labels are unique, and
/// per-annotator votes (when present) reproduce the counts exactly.
class VoteTable {
 public:
  VoteTable() = default;

  // Throws InputError naming the first offending row.
  VoteTable(std::vector<std::string> class_labels, int n_annotators,
            std::vector<VoteRow> rows,
            std::vector<std::string> annotator_ids = {});

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  std::size_t n_classes() const { return labels_.size(); }
  int n_annotators() const { return n_annotators_; }
  const std::vector<std::string>& class_labels() const { return labels_; }
  const std::vector<std::string>& annotator_ids() const { return annotator_ids_; }
  const std::vector<VoteRow>& rows() const { return rows_; }
  const VoteRow& row(std::size_t i) const { return rows_[i]; }

  // True when every row carries individual votes (non-empty tables only).
  bool has_per_annotator() const;
  bool has_groups() const;

  // Distinct group tags in order of first appearance.
  std::vector<std::string> groups() const;

  // Relative frequency of each class among all votes cast.
  std::vector<double> vote_frequencies() const;

  // Rows at the given positions (repeats allowed, as in a bootstrap draw).
  VoteTable select(std::span<const std::size_t> indices) const;

  bool operator==(const VoteTable&) const = default;

 private:
  std::vector<std::string> labels_;
  int n_annotators_ = 0;
  std::vector<VoteRow> rows_;
  std::vector<std::string> annotator_ids_;
};

// Distinct count vectors with their multiplicities; row_pattern maps each
// row onto its pattern. Patterns appear in order of first occurrence.
struct PatternIndex {
  std::size_t n_classes = 0;
  std::vector<int> patterns;  // n_patterns x K, row-major
  std::vector<std::size_t> row_pattern;
  std::vector<std::size_t> multiplicity;
  std::vector<std::size_t> first_row;

  static PatternIndex build(const VoteTable& table);
  std::size_t n_patterns() const { return multiplicity.size(); }
  std::span<const int> pattern(std::size_t p) const {
    return {patterns.data() + p * n_classes, n_classes};
  }
};

// ---- CSV I/O ---------------------------------------------------------------

struct LoadOptions {
  // Expected class labels in canonical order. Empty: take wide-format labels
  // from the header, long-format labels from the votes (natural order).
  std::vector<std::string> labels;
  // Expected votes per image; 0 infers it from the data.
  int n_annotators = 0;
};

enum class CsvFormat { wide, long_format };

// Detects the format from the header line.
VoteTable load_votes(const std::filesystem::path& path, const LoadOptions& options = {});
VoteTable parse_votes(const std::string& text, const LoadOptions& options = {},
                      const std::string& source = "<memory>");
CsvFormat detect_format(const std::string& header_line);

void save_votes_wide(const VoteTable& table, const std::filesystem::path& path);
void save_votes_long(const VoteTable& table, const std::filesystem::path& path);
std::string format_votes_wide(const VoteTable& table);
std::string format_votes_long(const VoteTable& table);

// Numbers (by value) before other strings (lexicographic).
bool natural_less(const std::string& a, const std::string& b);

// ---- Synthetic generation ----------------------------------------------------

struct GroupSpec {
  std::string name;
  std::size_t n_images = 0;
  std::optional<Vector> pi;
  std::optional<Matrix> theta;
};

struct GroundTruthSpec {
  std::vector<std::string> labels;  // empty: "1".."K"
  Vector pi_true;
  Matrix theta_true;
  int n_annotators = 0;             // ignored when expert_thetas is set
  std::vector<Matrix> expert_thetas;  // one confusion matrix per annotator
  std::vector<GroupSpec> groups;    // when set, n_images is the sum over groups
  std::size_t n_images = 0;
  std::uint64_t seed = 0;

  // Throws InputError listing the violated invariant.
  void validate() const;
  int annotators() const;
  std::vector<std::string> resolved_labels() const;
};

struct GeneratedData {
  VoteTable table;
  std::vector<int> latent;  // true class (0-based) per image
};

/// Draws Z ~ Multi(pi, 1) and each annotator's vote from row Z of its
/// confusion matrix. Image i only consumes the stream derive_seed(seed,
/// "generate/image", i), so output is reproducible on any platform.
GeneratedData generate(const GroundTruthSpec& spec);

// ---- Majority vote and subsetting --------------------------------------------

// Index of the maximal count; ties go to the lowest index.
std::size_t majority_class(const VoteRow& row);

struct ClassPartition {
  std::vector<std::size_t> urban;
  std::vector<std::size_t> nonurban;
};

// Numeric labels ("1".."10") are urban, the rest ("A".."G") non-urban.
ClassPartition lcz_partition(const std::vector<std::string>& labels);

enum class SchemeKind { binary, urban_only, nonurban_only, drop_class, group };

struct SubsetScheme {
  SchemeKind kind = SchemeKind::binary;
  std::string argument;  // class label (drop_class) or group tag (group)
};

// "binary", "urban", "nonurban", "drop-class:<label>", "group:<name>".
SubsetScheme parse_scheme(const std::string& text);

// Two columns (urban, nonurban); all images kept.
VoteTable subset_binary(const VoteTable& table, const ClassPartition& partition);
// Images whose majority class and every vote lie in `classes`; columns
// restricted to `classes`.
VoteTable subset_within(const VoteTable& table, std::span<const std::size_t> classes);
// Removes column k and every image with at least one vote for k.
VoteTable subset_drop_class(const VoteTable& table, std::size_t k);
VoteTable subset_group(const VoteTable& table, const std::string& group);
VoteTable subset(const VoteTable& table, const SubsetScheme& scheme);

// Removes annotator j's votes from every row (requires per-annotator data).
VoteTable drop_annotator(const VoteTable& table, std::size_t j);

std::size_t class_index(const VoteTable& table, const std::string& label);

// ---- Summary statistics ------------------------------------------------------

struct TableStats {
  std::size_t n_images = 0;
  std::size_t n_classes = 0;
  int n_annotators = 0;
  double unanimous_fraction = 0.0;
  std::size_t distinct_patterns = 0;
  std::vector<double> vote_frequencies;
  std::vector<std::pair<std::string, std::size_t>> group_sizes;
};

TableStats summarize(const VoteTable& table);

}  // namespace latent_truth
