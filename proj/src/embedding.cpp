#include "fdt/embedding.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fdt/feedback.hpp"
#include "fdt/util/errors.hpp"
#include "fdt/util/rng.hpp"

namespace fdt::embed {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'T', 'E'};
constexpr std::uint32_t kFileVersion = 1;

std::vector<std::string> split_tokens(const std::string& sentence) {
  std::vector<std::string> tokens;
  std::istringstream in(sentence);
  std::string t;
  while (in >> t) tokens.push_back(t);
  return tokens;
}

float unit_from_bits(std::uint64_t bits) {
  return static_cast<float>(2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0);
}

Eigen::VectorXf hashed_token_vector(const std::string& token, int d_src, std::uint64_t seed) {
  Eigen::VectorXf v(d_src);
  const std::uint64_t h = util::splitmix64(util::fnv1a(token) ^ util::splitmix64(seed));
  for (int i = 0; i < d_src; ++i) {
    v[i] = unit_from_bits(util::splitmix64(h + static_cast<std::uint64_t>(i) + 1));
  }
  return v;
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("embedding table file truncated");
  return v;
}

std::uint64_t record_hash(const std::map<std::string, Eigen::VectorXf>& table) {
  std::uint64_t h = util::kFnvOffset;
  for (const auto& [sentence, vec] : table) {
    h = util::fnv1a(sentence, h);
    h = util::fnv1a_bytes(vec.data(), sizeof(float) * static_cast<std::size_t>(vec.size()), h);
  }
  return h;
}

}  // namespace

EmbeddingProvider EmbeddingProvider::hashed(int d_src, std::uint64_t seed) {
  if (d_src < 1) throw ConfigError("embedding source dimension must be positive");
  EmbeddingProvider p;
  p.mode_ = ProviderMode::hashed_bow;
  p.d_src_ = d_src;
  p.seed_ = seed;
  return p;
}

EmbeddingProvider EmbeddingProvider::from_table(std::map<std::string, Eigen::VectorXf> table,
                                                int d_src) {
  if (d_src < 1) throw ConfigError("embedding source dimension must be positive");
  for (const auto& [sentence, vec] : table) {
    if (vec.size() != d_src) {
      throw DataError("embedding table entry has wrong width: " + sentence);
    }
  }
  EmbeddingProvider p;
  p.mode_ = ProviderMode::table;
  p.d_src_ = d_src;
  p.table_ = std::move(table);
  return p;
}

Eigen::VectorXf EmbeddingProvider::base_vector(const std::string& sentence) const {
  if (mode_ == ProviderMode::table) {
    const auto it = table_.find(sentence);
    if (it == table_.end()) {
      throw DataError("missing embedding for sentence: \"" + sentence + "\"");
    }
    return it->second;
  }
  const std::vector<std::string> tokens = split_tokens(sentence);
  Eigen::VectorXf v = Eigen::VectorXf::Zero(d_src_);
  if (tokens.empty()) return v;
  for (const std::string& t : tokens) v += hashed_token_vector(t, d_src_, seed_);
  v /= static_cast<float>(tokens.size());
  return v;
}

std::vector<std::string> EmbeddingProvider::missing_sentences(
    const std::vector<std::string>& sentences) const {
  std::vector<std::string> missing;
  if (mode_ == ProviderMode::hashed_bow) return missing;
  for (const std::string& s : sentences) {
    if (!table_.contains(s)) missing.push_back(s);
  }
  return missing;
}

std::uint64_t EmbeddingProvider::content_hash() const {
  std::uint64_t h = util::fnv1a(mode_ == ProviderMode::table ? "table" : "hashed_bow");
  h = util::fnv1a_bytes(&d_src_, sizeof(d_src_), h);
  if (mode_ == ProviderMode::hashed_bow) {
    h = util::fnv1a_bytes(&seed_, sizeof(seed_), h);
  } else {
    h ^= record_hash(table_);
  }
  return h;
}

void EmbeddingProvider::save_table_file(const std::string& path) const {
  if (mode_ != ProviderMode::table) {
    throw ConfigError("only table providers can be saved to a file");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embedding table: " + path);
  out.write(kMagic, 4);
  write_pod(out, kFileVersion);
  write_pod(out, static_cast<std::uint32_t>(d_src_));
  write_pod(out, static_cast<std::uint64_t>(table_.size()));
  write_pod(out, record_hash(table_));
  for (const auto& [sentence, vec] : table_) {
    write_pod(out, static_cast<std::uint32_t>(sentence.size()));
    out.write(sentence.data(), static_cast<std::streamsize>(sentence.size()));
    out.write(reinterpret_cast<const char*>(vec.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(vec.size())));
  }
  if (!out) throw DataError("write failed for embedding table: " + path);
}

EmbeddingProvider EmbeddingProvider::load_table_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding table: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not an embedding table file: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFileVersion) {
    throw DataError("unsupported embedding table version: " + std::to_string(version));
  }
  const auto d_src = static_cast<int>(read_pod<std::uint32_t>(in));
  const auto count = read_pod<std::uint64_t>(in);
  const auto stored_hash = read_pod<std::uint64_t>(in);
  std::map<std::string, Eigen::VectorXf> table;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string sentence(len, '\0');
    in.read(sentence.data(), static_cast<std::streamsize>(len));
    Eigen::VectorXf vec(d_src);
    in.read(reinterpret_cast<char*>(vec.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(d_src)));
    if (!in) throw DataError("embedding table file truncated");
    table.emplace(std::move(sentence), std::move(vec));
  }
  if (record_hash(table) != stored_hash) {
    throw DataError("embedding table hash mismatch: " + path);
  }
  return from_table(std::move(table), d_src);
}

std::vector<std::string> level_sentence_closure(levels::LevelName level) {
  std::vector<std::string> out = levels::enumerate_mission_strings(level);

  const bool maze = levels::default_config(level).layout == levels::Layout::maze;
  feedback::ClosureVocab vocab;
  vocab.goal_descriptions = levels::enumerate_goal_descriptions(level, false);
  if (maze) vocab.door_descriptions = levels::enumerate_goal_descriptions(level, true);
  vocab.portable_kinds = {grid::Kind::ball, grid::Kind::box, grid::Kind::key};
  for (int c = 0; c < grid::kColorCount; ++c) {
    vocab.colors.push_back(static_cast<grid::Color>(c));
  }
  vocab.include_door_rows = maze;
  const std::vector<std::string> fb = feedback::enumerate_feedback_strings(vocab);
  out.insert(out.end(), fb.begin(), fb.end());

  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EmbeddingProvider build_table(levels::LevelName level, int d_src, std::uint64_t seed) {
  const EmbeddingProvider source = EmbeddingProvider::hashed(d_src, seed);
  std::map<std::string, Eigen::VectorXf> table;
  for (const std::string& s : level_sentence_closure(level)) {
    table.emplace(s, source.base_vector(s));
  }
  return EmbeddingProvider::from_table(std::move(table), d_src);
}

}  // namespace fdt::embed
