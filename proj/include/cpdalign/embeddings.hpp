#pragma once

#include "cpdalign/geometry.hpp"
#include "cpdalign/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cpdalign {

/// A vocabulary paired with one embedding row per token. Row index is the
/// frequency rank (file order). Immutable once built.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  EmbeddingSpace(std::vector<std::string> vocab, Matrix vectors);

  const std::vector<std::string>& vocab() const { return vocab_; }
  const Matrix& vectors() const { return vectors_; }
  std::size_t size() const { return vocab_.size(); }
  Eigen::Index dim() const { return vectors_.cols(); }
  bool empty() const { return vocab_.empty(); }

  std::optional<std::size_t> find(std::string_view token) const;

  // Same vocabulary with replaced vectors (same shape).
  EmbeddingSpace with_vectors(Matrix vectors) const;

  // The `count` most frequent rows.
  EmbeddingSpace truncated(std::size_t count) const;

 private:
  std::vector<std::string> vocab_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct VecLoadResult {
  EmbeddingSpace space;
  std::size_t duplicates_skipped = 0;
  std::size_t declared_rows = 0;
};

/// Reads the word2vec/FastText text format: a "N D" header, then one token and
/// D floats per line. Keeps at most `max_vocab` rows in file order; duplicated
/// tokens keep their first occurrence. Throws ParseError with a line number.
VecLoadResult load_vec(const std::filesystem::path& path, std::size_t max_vocab);

/// Writes `space` in the same format. precision < 17 prints that many digits
/// after the decimal point; precision >= 17 prints the shortest exact
/// representation, which round-trips bit-for-bit.
void save_vec(const EmbeddingSpace& space, const std::filesystem::path& path, int precision = 17);

/// Unit-length rows, then mean-centered columns. `renormalize` adds a final
/// unit-length pass.
EmbeddingSpace normalize(const EmbeddingSpace& space, bool renormalize = false);

enum class SynthKind { orthogonal, similarity, affine };

std::string_view to_string(SynthKind kind);
SynthKind parse_synth_kind(std::string_view text);

struct SynthPair {
  EmbeddingSpace source;
  EmbeddingSpace target;
  // gold[i] is the target row that source row i was mapped to.
  std::vector<std::size_t> gold;
  SimilarityTransform planted;
  double noise_sigma = 0.0;

  // Planted linear part as a map on row vectors.
  LinearMap planted_row_map() const { return planted.row_map(); }
  // Gold pairs as token pairs, in source order.
  std::vector<std::pair<std::string, std::string>> gold_tokens() const;
};

/// Synthetic pair with known correspondence. The source is drawn from an
/// anisotropic Gaussian mixture with `clusters` components; the target is the
/// planted transform of every source row plus isotropic noise, with rows
/// shuffled by a seeded permutation. Deterministic in `seed`.
SynthPair synth_pair(std::size_t n, std::size_t d, double noise_sigma, std::uint64_t seed,
                     SynthKind kind, std::size_t clusters);

/// Haar-distributed random orthogonal matrix with determinant +1.
Matrix random_rotation(Eigen::Index d, std::uint64_t seed);

}  // namespace cpdalign
