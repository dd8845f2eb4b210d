#include "cpdalign/embeddings.hpp"

#include "cpdalign/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace cpdalign {

EmbeddingSpace::EmbeddingSpace(std::vector<std::string> vocab, Matrix vectors)
    : vocab_(std::move(vocab)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(vocab_.size()) != vectors_.rows()) {
    throw ContractError("EmbeddingSpace: vocabulary size does not match row count");
  }
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], i).second) {
      throw ContractError("EmbeddingSpace: duplicate token '" + vocab_[i] + "'");
    }
  }
}

std::optional<std::size_t> EmbeddingSpace::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingSpace EmbeddingSpace::with_vectors(Matrix vectors) const {
  if (vectors.rows() != vectors_.rows()) {
    throw ContractError("EmbeddingSpace::with_vectors: row count changed");
  }
  return EmbeddingSpace(vocab_, std::move(vectors));
}

EmbeddingSpace EmbeddingSpace::truncated(std::size_t count) const {
  count = std::min(count, size());
  std::vector<std::string> vocab(vocab_.begin(), vocab_.begin() + static_cast<std::ptrdiff_t>(count));
  return EmbeddingSpace(std::move(vocab), vectors_.topRows(static_cast<Eigen::Index>(count)));
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

VecLoadResult load_vec(const std::filesystem::path& path, std::size_t max_vocab) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header in '" + path.string() + "'", 1);
  strip_cr(line);
  auto header = split_fields(line);
  std::size_t declared_rows = 0;
  std::size_t dim = 0;
  if (header.size() != 2 || !parse_number(header[0], declared_rows) || !parse_number(header[1], dim) ||
      dim == 0) {
    throw ParseError("header must be \"N D\"", 1);
  }

  const std::size_t keep = std::min(max_vocab, declared_rows);
  std::vector<std::string> vocab;
  vocab.reserve(keep);
  std::vector<double> values;
  values.reserve(keep * dim);
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t duplicates = 0;
  std::size_t line_no = 1;

  while (vocab.size() < keep && std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto fields = split_fields(line);
    if (fields.empty()) throw ParseError("empty row", line_no);
    if (fields.size() != dim + 1) {
      throw ParseError("expected token and " + std::to_string(dim) + " values, found " +
                           std::to_string(fields.size() - 1) + " values",
                       line_no);
    }
    const std::size_t start = values.size();
    for (std::size_t j = 1; j <= dim; ++j) {
      double v = 0.0;
      if (!parse_number(fields[j], v) || !std::isfinite(v)) {
        throw ParseError("malformed float '" + std::string(fields[j]) + "'", line_no);
      }
      values.push_back(v);
    }
    std::string token(fields[0]);
    if (!seen.emplace(token, vocab.size()).second) {
      ++duplicates;
      values.resize(start);
      continue;
    }
    vocab.push_back(std::move(token));
  }

  Matrix vectors(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
      vectors(i, j) = values[static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(j)];
    }
  }
  return VecLoadResult{EmbeddingSpace(std::move(vocab), std::move(vectors)), duplicates, declared_rows};
}

void save_vec(const EmbeddingSpace& space, const std::filesystem::path& path, int precision) {
  if (space.empty()) throw ContractError("save_vec: empty vocabulary");
  if (precision < 0) throw ConfigError("save_vec: precision must be non-negative");
  for (const auto& token : space.vocab()) {
    if (token.empty() || token.find_first_of(" \t\n\r") != std::string::npos) {
      throw ContractError("save_vec: token '" + token + "' is empty or contains whitespace");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << space.size() << ' ' << space.dim() << '\n';
  char buf[512];
  const Matrix& m = space.vectors();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << space.vocab()[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::to_chars_result res = precision >= 17
                                     ? std::to_chars(buf, buf + sizeof buf, m(i, j))
                                     : std::to_chars(buf, buf + sizeof buf, m(i, j), std::chars_format::fixed,
                                                     precision);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

EmbeddingSpace normalize(const EmbeddingSpace& space, bool renormalize) {
  Matrix m = space.vectors();
  auto unit_rows = [&](Matrix& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double norm = a.row(i).norm();
      if (!(norm > 0.0)) {
        throw ContractError("normalize: zero-norm row for token '" + space.vocab()[static_cast<std::size_t>(i)] +
                            "'");
      }
      a.row(i) /= norm;
    }
  };
  unit_rows(m);
  if (m.rows() > 0) {
    Eigen::RowVectorXd mean = m.colwise().mean();
    m.rowwise() -= mean;
  }
  if (renormalize) unit_rows(m);
  return space.with_vectors(std::move(m));
}

std::string_view to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::orthogonal: return "orthogonal";
    case SynthKind::similarity: return "similarity";
    case SynthKind::affine: return "affine";
  }
  return "orthogonal";
}

SynthKind parse_synth_kind(std::string_view text) {
  if (text == "orthogonal") return SynthKind::orthogonal;
  if (text == "similarity") return SynthKind::similarity;
  if (text == "affine") return SynthKind::affine;
  throw ConfigError("unknown synthetic kind '" + std::string(text) + "'");
}

std::vector<std::pair<std::string, std::string>> SynthPair::gold_tokens() const {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.emplace_back(source.vocab()[i], target.vocab()[gold[i]]);
  }
  return out;
}

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

Matrix haar_rotation(Eigen::Index d, std::mt19937_64& rng) {
  Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return q;
}

}  // namespace

Matrix random_rotation(Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return haar_rotation(d, rng);
}

SynthPair synth_pair(std::size_t n, std::size_t d, double noise_sigma, std::uint64_t seed, SynthKind kind,
                     std::size_t clusters) {
  if (d < 2 || n < d) throw ConfigError("synth_pair: requires n >= d >= 2");
  if (clusters < 1) throw ConfigError("synth_pair: clusters must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth_pair: noise_sigma must be >= 0");

  const auto rows = static_cast<Eigen::Index>(n);
  const auto dim = static_cast<Eigen::Index>(d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Decaying spectrum so that the cloud has no rotational symmetry.
  Vector spectrum(dim);
  for (Eigen::Index j = 0; j < dim; ++j) spectrum(j) = std::exp(-1.5 * static_cast<double>(j) / static_cast<double>(dim));
  const Matrix frame = haar_rotation(dim, rng);

  const auto k = static_cast<Eigen::Index>(clusters);
  Matrix means = gaussian_matrix(k, dim, rng) * spectrum.asDiagonal() * 2.0;
  std::vector<Matrix> shapes;
  shapes.reserve(clusters);
  for (std::size_t c = 0; c < clusters; ++c) {
    shapes.push_back(gaussian_matrix(dim, dim, rng) * spectrum.asDiagonal() / std::sqrt(static_cast<double>(d)));
  }
  // Zipf-like component weights.
  std::vector<double> weights(clusters);
  for (std::size_t c = 0; c < clusters; ++c) weights[c] = 1.0 / static_cast<double>(c + 1);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());

  Matrix source(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::size_t c = pick(rng);
    Eigen::RowVectorXd z(dim);
    for (Eigen::Index j = 0; j < dim; ++j) z(j) = normal(rng);
    source.row(i) = means.row(static_cast<Eigen::Index>(c)) + z * shapes[c];
  }
  source = source * frame;

  SimilarityTransform planted = SimilarityTransform::identity(dim);
  planted.r = haar_rotation(dim, rng);
  if (kind == SynthKind::similarity) {
    planted.s = 0.5 + 1.5 * uniform(rng);
    for (Eigen::Index j = 0; j < dim; ++j) planted.t(j) = 0.5 * normal(rng);
  } else if (kind == SynthKind::affine) {
    planted.mode = TransformMode::affine;
    Vector stretch(dim);
    for (Eigen::Index j = 0; j < dim; ++j) stretch(j) = 0.5 + 1.5 * uniform(rng);
    planted.r = planted.r * stretch.asDiagonal() * haar_rotation(dim, rng);
    for (Eigen::Index j = 0; j < dim; ++j) planted.t(j) = 0.5 * normal(rng);
  }

  std::vector<std::size_t> gold(n);
  std::iota(gold.begin(), gold.end(), std::size_t{0});
  std::shuffle(gold.begin(), gold.end(), rng);

  const Matrix mapped = planted.apply(source);
  Matrix target(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    target.row(static_cast<Eigen::Index>(gold[static_cast<std::size_t>(i)])) = mapped.row(i);
  }
  if (noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) target(i, j) += noise_sigma * normal(rng);
    }
  }

  std::vector<std::string> src_vocab(n), tgt_vocab(n);
  for (std::size_t i = 0; i < n; ++i) {
    src_vocab[i] = "s" + std::to_string(i);
    tgt_vocab[i] = "t" + std::to_string(i);
  }
  return SynthPair{EmbeddingSpace(std::move(src_vocab), std::move(source)),
                   EmbeddingSpace(std::move(tgt_vocab), std::move(target)), std::move(gold), std::move(planted),
                   noise_sigma};
}

}  // namespace cpdalign
