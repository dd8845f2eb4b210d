#include "cpdalign/metrics.hpp"

#include "cpdalign/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace cpdalign {

namespace {

// Keeps a score block around 32 MB.
Eigen::Index rows_per_block(Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index budget = Eigen::Index{1} << 22;
  return std::clamp<Eigen::Index>(budget / std::max<Eigen::Index>(cols, 1), 1, std::max<Eigen::Index>(rows, 1));
}

bool better(const Neighbor& a, const Neighbor& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

std::vector<Neighbor> top_of_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, std::size_t k) {
  const auto n = static_cast<std::size_t>(row.size());
  k = std::min(k, n);
  std::vector<Neighbor> all(n);
  for (std::size_t j = 0; j < n; ++j) all[j] = Neighbor{j, row(static_cast<Eigen::Index>(j))};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

double mean_of_top(std::vector<double>& values, std::size_t k) {
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                   std::greater<>());
  std::sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += values[i];
  return sum / static_cast<double>(k);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw ContractError("row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

template <typename BlockScores>
NeighborLists retrieve_rows(std::span<const std::size_t> rows, Eigen::Index target_count, std::size_t topn,
                            BlockScores&& block_scores) {
  NeighborLists out;
  out.reserve(rows.size());
  const Eigen::Index step = rows_per_block(static_cast<Eigen::Index>(rows.size()), target_count);
  for (std::size_t b = 0; b < rows.size(); b += static_cast<std::size_t>(step)) {
    const std::size_t e = std::min(rows.size(), b + static_cast<std::size_t>(step));
    Matrix s = block_scores(rows.subspan(b, e - b));
    for (Eigen::Index i = 0; i < s.rows(); ++i) out.push_back(top_of_row(s.row(i), topn));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

NeighborLists cosine_topk(const Matrix& queries, const Matrix& targets, std::size_t k) {
  if (queries.cols() != targets.cols()) throw ContractError("cosine_topk: dimension mismatch");
  if (k == 0) throw ConfigError("cosine_topk: k must be >= 1");
  const Matrix q = unit_rows(queries);
  const Matrix t = unit_rows(targets);
  NeighborLists out;
  out.reserve(static_cast<std::size_t>(q.rows()));
  const Eigen::Index step = rows_per_block(q.rows(), t.rows());
  for (Eigen::Index b = 0; b < q.rows(); b += step) {
    const Eigen::Index e = std::min(q.rows(), b + step);
    Matrix s = q.middleRows(b, e - b) * t.transpose();
    for (Eigen::Index i = 0; i < s.rows(); ++i) out.push_back(top_of_row(s.row(i), k));
  }
  return out;
}

Vector mean_topk_cosine(const Matrix& from, const Matrix& to, std::size_t k) {
  if (from.cols() != to.cols()) throw ContractError("mean_topk_cosine: dimension mismatch");
  if (k == 0 || k > static_cast<std::size_t>(to.rows())) {
    throw ConfigError("mean_topk_cosine: k must be in [1, " + std::to_string(to.rows()) + "]");
  }
  const Matrix a = unit_rows(from);
  const Matrix b = unit_rows(to);
  Vector out(a.rows());
  std::vector<double> row(static_cast<std::size_t>(b.rows()));
  const Eigen::Index step = rows_per_block(a.rows(), b.rows());
  for (Eigen::Index start = 0; start < a.rows(); start += step) {
    const Eigen::Index end = std::min(a.rows(), start + step);
    Matrix s = a.middleRows(start, end - start) * b.transpose();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) row[static_cast<std::size_t>(j)] = s(i, j);
      out(start + i) = mean_of_top(row, k);
    }
  }
  return out;
}

CslsIndex::CslsIndex(const Matrix& queries, const Matrix& targets, std::size_t k) {
  if (queries.rows() == 0 || targets.rows() == 0) throw ContractError("csls: empty embedding set");
  if (queries.cols() != targets.cols()) throw ContractError("csls: dimension mismatch");
  if (k == 0) throw ConfigError("csls: k must be >= 1");
  if (k > static_cast<std::size_t>(targets.rows()) || k > static_cast<std::size_t>(queries.rows())) {
    std::ostringstream msg;
    msg << "csls: k=" << k << " exceeds set size (" << queries.rows() << " queries, " << targets.rows()
        << " targets)";
    throw ConfigError(msg.str());
  }
  queries_ = unit_rows(queries);
  targets_ = unit_rows(targets);
  query_radius_ = mean_topk_cosine(queries_, targets_, k);
  target_radius_ = mean_topk_cosine(targets_, queries_, k);
}

Matrix CslsIndex::cosines(Eigen::Index begin, Eigen::Index end) const {
  return queries_.middleRows(begin, end - begin) * targets_.transpose();
}

Matrix CslsIndex::scores(Eigen::Index begin, Eigen::Index end) const {
  Matrix s = 2.0 * cosines(begin, end);
  s.colwise() -= query_radius_.segment(begin, end - begin);
  s.rowwise() -= target_radius_.transpose();
  return s;
}

NeighborLists CslsIndex::retrieve(std::span<const std::size_t> query_rows, std::size_t topn) const {
  return retrieve_rows(query_rows, target_count(), topn, [&](std::span<const std::size_t> rows) {
    Matrix s = 2.0 * (gather_rows(queries_, rows) * targets_.transpose());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      s.row(static_cast<Eigen::Index>(i)).array() -= query_radius_(static_cast<Eigen::Index>(rows[i]));
    }
    s.rowwise() -= target_radius_.transpose();
    return s;
  });
}

Matrix csls(const Matrix& x_mapped, const Matrix& y, const CslsParams& params) {
  return CslsIndex(x_mapped, y, params.k).scores();
}

std::vector<std::size_t> csls_argmax(const Matrix& x_mapped, const Matrix& y, const CslsParams& params) {
  CslsIndex index(x_mapped, y, params.k);
  std::vector<std::size_t> rows(static_cast<std::size_t>(x_mapped.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (const auto& hits : index.retrieve(rows, 1)) out.push_back(hits.front().index);
  return out;
}

MappedPair MappedPair::from_maps(const Matrix& x, const Matrix& y, const LinearMap& forward,
                                 const LinearMap& backward) {
  if (forward.rows() != x.cols() || forward.cols() != y.cols() || backward.rows() != y.cols() ||
      backward.cols() != x.cols()) {
    throw ContractError("MappedPair: map shapes do not match embedding dimensions");
  }
  return MappedPair{x, y, x * forward, y * backward};
}

MappedPair MappedPair::top_rows(std::size_t source_rows, std::size_t target_rows) const {
  const auto ns = std::min<Eigen::Index>(static_cast<Eigen::Index>(source_rows), source.rows());
  const auto nt = std::min<Eigen::Index>(static_cast<Eigen::Index>(target_rows), target.rows());
  return MappedPair{source.topRows(ns), target.topRows(nt), source_mapped.topRows(ns), target_mapped.topRows(nt)};
}

BidirectionalScorer::BidirectionalScorer(const MappedPair& pair, std::size_t k)
    : forward_(pair.source_mapped, pair.target, k), backward_(pair.source, pair.target_mapped, k) {
  if (pair.source.rows() != pair.source_mapped.rows() || pair.target.rows() != pair.target_mapped.rows()) {
    throw ContractError("BidirectionalScorer: mapped sets must keep their row counts");
  }
}

Matrix BidirectionalScorer::scores(Eigen::Index begin, Eigen::Index end) const {
  return forward_.scores(begin, end) + backward_.scores(begin, end);
}

Matrix BidirectionalScorer::mean_cosines(Eigen::Index begin, Eigen::Index end) const {
  return 0.5 * (forward_.cosines(begin, end) + backward_.cosines(begin, end));
}

NeighborLists BidirectionalScorer::retrieve(std::span<const std::size_t> source_rows, std::size_t topn) const {
  // Each direction is scored on the gathered rows, then summed.
  NeighborLists out;
  out.reserve(source_rows.size());
  const Eigen::Index step = rows_per_block(static_cast<Eigen::Index>(source_rows.size()), target_count());
  for (std::size_t b = 0; b < source_rows.size(); b += static_cast<std::size_t>(step)) {
    const std::size_t e = std::min(source_rows.size(), b + static_cast<std::size_t>(step));
    Matrix s(static_cast<Eigen::Index>(e - b), target_count());
    for (std::size_t i = b; i < e; ++i) {
      const auto r = static_cast<Eigen::Index>(source_rows[i]);
      if (r >= source_count()) throw ContractError("BidirectionalScorer::retrieve: row out of range");
      s.row(static_cast<Eigen::Index>(i - b)) = scores(r, r + 1);
    }
    for (Eigen::Index i = 0; i < s.rows(); ++i) out.push_back(top_of_row(s.row(i), topn));
  }
  return out;
}

Matrix bidirectional_similarity(const Matrix& x, const Matrix& y, const LinearMap& forward,
                                const LinearMap& backward, const CslsParams& params) {
  return BidirectionalScorer(MappedPair::from_maps(x, y, forward, backward), params.k).scores();
}

SeedDictionary induce_dictionary(const MappedPair& full, const CslsParams& params) {
  const MappedPair pair = full.top_rows(params.candidate_limit, params.candidate_limit);
  const BidirectionalScorer scorer(pair, params.k);
  const Eigen::Index rows = scorer.source_count();
  const Eigen::Index cols = scorer.target_count();

  std::vector<Eigen::Index> row_best(static_cast<std::size_t>(rows), 0);
  std::vector<double> row_value(static_cast<std::size_t>(rows), -std::numeric_limits<double>::infinity());
  std::vector<Eigen::Index> col_best(static_cast<std::size_t>(cols), -1);
  std::vector<double> col_value(static_cast<std::size_t>(cols), -std::numeric_limits<double>::infinity());

  const Eigen::Index step = rows_per_block(rows, cols);
  for (Eigen::Index b = 0; b < rows; b += step) {
    const Eigen::Index e = std::min(rows, b + step);
    const Matrix s = scorer.scores(b, e);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const auto n = static_cast<std::size_t>(b + i);
      for (Eigen::Index j = 0; j < cols; ++j) {
        const double v = s(i, j);
        if (v > row_value[n]) {
          row_value[n] = v;
          row_best[n] = j;
        }
        // Rows arrive in ascending order, so strict '>' keeps the lowest index on ties.
        if (v > col_value[static_cast<std::size_t>(j)]) {
          col_value[static_cast<std::size_t>(j)] = v;
          col_best[static_cast<std::size_t>(j)] = b + i;
        }
      }
    }
  }

  SeedDictionary dict;
  for (Eigen::Index n = 0; n < rows; ++n) {
    const Eigen::Index m = row_best[static_cast<std::size_t>(n)];
    if (col_best[static_cast<std::size_t>(m)] == n) {
      dict.pairs.push_back(DictEntry{static_cast<std::size_t>(n), static_cast<std::size_t>(m),
                                     row_value[static_cast<std::size_t>(n)]});
    }
  }
  std::stable_sort(dict.pairs.begin(), dict.pairs.end(),
                   [](const DictEntry& a, const DictEntry& b) { return a.score > b.score; });
  dict.empty_warning = dict.pairs.empty();
  return dict;
}

SeedDictionary induce_dictionary(const Matrix& x, const Matrix& y, const LinearMap& forward,
                                 const LinearMap& backward, const CslsParams& params) {
  return induce_dictionary(MappedPair::from_maps(x, y, forward, backward), params);
}

double selection_criterion(const MappedPair& full, const CslsParams& params) {
  const MappedPair pair = full.top_rows(params.candidate_limit, params.candidate_limit);
  const BidirectionalScorer scorer(pair, params.k);
  const Eigen::Index rows = scorer.source_count();
  double total = 0.0;
  const Eigen::Index step = rows_per_block(rows, scorer.target_count());
  for (Eigen::Index b = 0; b < rows; b += step) {
    const Eigen::Index e = std::min(rows, b + step);
    const Matrix s = scorer.scores(b, e);
    const Matrix c = scorer.mean_cosines(b, e);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      Eigen::Index best = 0;
      s.row(i).maxCoeff(&best);
      total += c(i, best);
    }
  }
  return total / static_cast<double>(rows);
}

double selection_criterion(const Matrix& x, const Matrix& y, const LinearMap& forward, const LinearMap& backward,
                           const CslsParams& params) {
  return selection_criterion(MappedPair::from_maps(x, y, forward, backward), params);
}

GoldDictionary::GoldDictionary(const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [src, tgt] : pairs) {
    auto [it, inserted] = targets_.try_emplace(src);
    if (inserted) sources_.push_back(src);
    it->second.insert(tgt);
  }
}

GoldDictionary GoldDictionary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open gold dictionary '" + path.string() + "'", 0);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string src, tgt, extra;
    if (!(fields >> src)) continue;
    if (!(fields >> tgt) || (fields >> extra)) {
      throw ParseError("gold dictionary lines must hold exactly two tokens", line_no);
    }
    pairs.emplace_back(std::move(src), std::move(tgt));
  }
  return GoldDictionary(pairs);
}

const std::set<std::string>& GoldDictionary::targets(const std::string& source) const {
  static const std::set<std::string> none;
  auto it = targets_.find(source);
  return it == targets_.end() ? none : it->second;
}

PrecisionReport evaluate_p_at_k(const Predictions& predictions, const GoldDictionary& gold, std::size_t k) {
  if (gold.empty()) throw ContractError("evaluate_p_at_k: empty gold dictionary");
  if (k == 0) throw ConfigError("evaluate_p_at_k: k must be >= 1");
  PrecisionReport report;
  report.queries = gold.size();
  for (const auto& src : gold.sources()) {
    auto it = predictions.find(src);
    if (it == predictions.end()) {
      ++report.oov;
      continue;
    }
    const auto& accepted = gold.targets(src);
    const std::size_t depth = std::min(k, it->second.size());
    for (std::size_t i = 0; i < depth; ++i) {
      if (accepted.count(it->second[i])) {
        ++report.hits;
        break;
      }
    }
  }
  report.precision = static_cast<double>(report.hits) / static_cast<double>(report.queries);
  return report;
}

Predictions predict_translations(const MappedPair& pair, const std::vector<std::string>& source_vocab,
                                 const std::vector<std::string>& target_vocab, const GoldDictionary& gold,
                                 std::size_t topn, std::size_t k, bool bidirectional) {
  std::unordered_map<std::string, std::size_t> source_index;
  for (std::size_t i = 0; i < source_vocab.size(); ++i) source_index.emplace(source_vocab[i], i);
  std::vector<std::size_t> rows;
  std::vector<const std::string*> tokens;
  for (const auto& src : gold.sources()) {
    auto it = source_index.find(src);
    if (it == source_index.end()) continue;
    rows.push_back(it->second);
    tokens.push_back(&src);
  }
  Predictions out;
  if (rows.empty()) return out;
  NeighborLists hits = bidirectional ? BidirectionalScorer(pair, k).retrieve(rows, topn)
                                     : CslsIndex(pair.source_mapped, pair.target, k).retrieve(rows, topn);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& ranked = out[*tokens[i]];
    for (const auto& h : hits[i]) ranked.push_back(target_vocab[h.index]);
  }
  return out;
}

void write_dictionary_tsv(const SeedDictionary& dict, const std::vector<std::string>& source_vocab,
                          const std::vector<std::string>& target_vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& e : dict.pairs) {
    out << source_vocab.at(e.source) << '\t' << target_vocab.at(e.target) << '\t' << format_double(e.score) << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace cpdalign
