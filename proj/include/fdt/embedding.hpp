#ifndef FDT_EMBEDDING_HPP_
#define FDT_EMBEDDING_HPP_

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "fdt/levels.hpp"

namespace fdt::embed {

// Width of the learned language projection's output; the model consumes
// 128-dimensional sentence embeddings.
inline constexpr int kLangDim = 128;
inline constexpr int kDefaultSrcDim = 384;

enum class ProviderMode : std::uint8_t { hashed_bow = 0, table = 1 };

// Frozen sentence-embedding source. Outputs never change once constructed;
// the trainable projection that downsamples them to kLangDim lives with the
// model parameters.
class EmbeddingProvider {
 public:
  static EmbeddingProvider hashed(int d_src = kDefaultSrcDim, std::uint64_t seed = 0);
  static EmbeddingProvider from_table(std::map<std::string, Eigen::VectorXf> table, int d_src);
  static EmbeddingProvider load_table_file(const std::string& path);

  void save_table_file(const std::string& path) const;

  ProviderMode mode() const { return mode_; }
  int d_src() const { return d_src_; }

  // d_src-dimensional frozen vector. Table mode throws DataError on lookup
  // misses; hashed mode is total.
  Eigen::VectorXf base_vector(const std::string& sentence) const;

  // Sentences absent from a table provider; empty in hashed mode.
  std::vector<std::string> missing_sentences(const std::vector<std::string>& sentences) const;

  std::uint64_t content_hash() const;

 private:
  ProviderMode mode_ = ProviderMode::hashed_bow;
  int d_src_ = kDefaultSrcDim;
  std::uint64_t seed_ = 0;
  std::map<std::string, Eigen::VectorXf> table_;
};

// Every sentence the model can encounter in a level: all grammar missions,
// the feedback closure, and the no-feedback constant.
std::vector<std::string> level_sentence_closure(levels::LevelName level);

// Table provider covering a level's closure, filled from the hashed
// generator; the file interface allows substituting precomputed vectors.
EmbeddingProvider build_table(levels::LevelName level, int d_src = kDefaultSrcDim,
                              std::uint64_t seed = 0);

}  // namespace fdt::embed

#endif  // FDT_EMBEDDING_HPP_
