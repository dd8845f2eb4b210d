#pragma once

#include "cpdalign/embeddings.hpp"
#include "cpdalign/numerics.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cpdalign {

struct CslsParams {
  std::size_t k = 10;
  // Only this many most frequent words per side take part in induction and
  // in the selection criterion. Clamped to the vocabulary size.
  std::size_t candidate_limit = 25000;
};

struct Neighbor {
  std::size_t index = 0;
  double score = 0.0;
};
using NeighborLists = std::vector<std::vector<Neighbor>>;

// Rows scaled to unit length; zero rows stay zero.
Matrix unit_rows(const Matrix& m);

/// Exact top-k targets by cosine for every query row, best first. Ties go to
/// the lower target index.
NeighborLists cosine_topk(const Matrix& queries, const Matrix& targets, std::size_t k);

/// Mean cosine from every row of `from` to its k nearest rows of `to`.
Vector mean_topk_cosine(const Matrix& from, const Matrix& to, std::size_t k);

/// Cross-domain similarity local scaling between two row sets:
///   csls(q, t) = 2 cos(q, t) - r_t(q) - r_q(t)
/// where r_t(q) is the mean cosine of q to its k nearest targets and r_q(t)
/// the mean cosine of t to its k nearest queries. The neighbourhood radii are
/// computed once at construction.
class CslsIndex {
 public:
  CslsIndex(const Matrix& queries, const Matrix& targets, std::size_t k);

  Eigen::Index query_count() const { return queries_.rows(); }
  Eigen::Index target_count() const { return targets_.rows(); }
  const Vector& query_radius() const { return query_radius_; }
  const Vector& target_radius() const { return target_radius_; }

  // CSLS scores of queries [begin, end) against every target.
  Matrix scores(Eigen::Index begin, Eigen::Index end) const;
  Matrix scores() const { return scores(0, query_count()); }

  // Cosines of queries [begin, end) against every target.
  Matrix cosines(Eigen::Index begin, Eigen::Index end) const;

  // Top-n targets by CSLS for each listed query row.
  NeighborLists retrieve(std::span<const std::size_t> query_rows, std::size_t topn) const;

 private:
  Matrix queries_;
  Matrix targets_;
  Vector query_radius_;
  Vector target_radius_;
};

/// Dense CSLS score matrix (rows: x_mapped, columns: y).
Matrix csls(const Matrix& x_mapped, const Matrix& y, const CslsParams& params);

/// Argmax-by-CSLS target for every row of x_mapped.
std::vector<std::size_t> csls_argmax(const Matrix& x_mapped, const Matrix& y, const CslsParams& params);

/// Both embedding sets in their own frame plus their images in the other
/// frame. Row order is frequency order.
struct MappedPair {
  Matrix source;
  Matrix target;
  Matrix source_mapped;  // source rows expressed in the target frame
  Matrix target_mapped;  // target rows expressed in the source frame

  static MappedPair from_maps(const Matrix& x, const Matrix& y, const LinearMap& forward,
                              const LinearMap& backward);
  MappedPair top_rows(std::size_t source_rows, std::size_t target_rows) const;
};

/// Scores sigma(n, m) = csls(f(x_n), y_m) + csls(x_n, g(y_m)).
class BidirectionalScorer {
 public:
  BidirectionalScorer(const MappedPair& pair, std::size_t k);

  Eigen::Index source_count() const { return forward_.query_count(); }
  Eigen::Index target_count() const { return forward_.target_count(); }

  Matrix scores(Eigen::Index begin, Eigen::Index end) const;
  Matrix scores() const { return scores(0, source_count()); }

  // Mean of the two directional cosines for rows [begin, end).
  Matrix mean_cosines(Eigen::Index begin, Eigen::Index end) const;

  NeighborLists retrieve(std::span<const std::size_t> source_rows, std::size_t topn) const;

 private:
  CslsIndex forward_;
  CslsIndex backward_;
};

/// Dense sigma matrix for x, y under forward map F and backward map G.
Matrix bidirectional_similarity(const Matrix& x, const Matrix& y, const LinearMap& forward,
                                const LinearMap& backward, const CslsParams& params);

struct DictEntry {
  std::size_t source = 0;
  std::size_t target = 0;
  double score = 0.0;
};

struct SeedDictionary {
  std::vector<DictEntry> pairs;  // descending score
  bool empty_warning = false;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

/// Mutual nearest neighbours under the bidirectional sigma, restricted to the
/// candidate_limit most frequent words on each side.
SeedDictionary induce_dictionary(const MappedPair& pair, const CslsParams& params);
SeedDictionary induce_dictionary(const Matrix& x, const Matrix& y, const LinearMap& forward,
                                 const LinearMap& backward, const CslsParams& params);

/// Unsupervised model-selection score: for each of the candidate_limit most
/// frequent source words take the sigma-argmax target and average
/// (cos(f(x_n), y_m) + cos(x_n, g(y_m))) / 2 over those pairs.
double selection_criterion(const MappedPair& pair, const CslsParams& params);
double selection_criterion(const Matrix& x, const Matrix& y, const LinearMap& forward, const LinearMap& backward,
                           const CslsParams& params);

/// Ground-truth translations: source token -> set of accepted targets, with
/// sources kept in first-seen order.
class GoldDictionary {
 public:
  GoldDictionary() = default;
  explicit GoldDictionary(const std::vector<std::pair<std::string, std::string>>& pairs);

  static GoldDictionary load(const std::filesystem::path& path);

  const std::vector<std::string>& sources() const { return sources_; }
  const std::set<std::string>& targets(const std::string& source) const;
  bool empty() const { return sources_.empty(); }
  std::size_t size() const { return sources_.size(); }

 private:
  std::vector<std::string> sources_;
  std::map<std::string, std::set<std::string>> targets_;
};

struct PrecisionReport {
  double precision = 0.0;
  std::size_t queries = 0;  // gold source tokens, OOV included
  std::size_t hits = 0;
  std::size_t oov = 0;      // gold sources missing from `predictions`
};

/// Ranked predictions per source token; tokens absent from the map are OOV.
using Predictions = std::unordered_map<std::string, std::vector<std::string>>;

/// Fraction of gold source tokens whose top-k predictions contain an accepted
/// translation. OOV sources count as misses.
PrecisionReport evaluate_p_at_k(const Predictions& predictions, const GoldDictionary& gold, std::size_t k);

/// Top-n target tokens for every gold source token present in `source_vocab`,
/// ranked by sigma over the full vocabularies (bidirectional) or by
/// csls(source_mapped, target) alone.
Predictions predict_translations(const MappedPair& pair, const std::vector<std::string>& source_vocab,
                                 const std::vector<std::string>& target_vocab, const GoldDictionary& gold,
                                 std::size_t topn, std::size_t k, bool bidirectional);

/// "source\ttarget\tscore" lines in dictionary order.
void write_dictionary_tsv(const SeedDictionary& dict, const std::vector<std::string>& source_vocab,
                          const std::vector<std::string>& target_vocab, const std::filesystem::path& path);

}  // namespace cpdalign
