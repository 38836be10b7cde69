#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace mqa {

// Pre-segmented token sequence; tokens are whitespace-delimited in files.
using TokenSequence = std::vector<std::string>;

inline constexpr const char* kBoaToken = "⟨BOA⟩";
inline constexpr const char* kEoaToken = "⟨EOA⟩";
inline constexpr const char* kOovToken = "⟨OOV⟩";

// Token dictionary. Ids 0..N-1 biject with tokens; the three special tokens
// are always present at fixed ids. Immutable after construction.
class Vocabulary {
 public:
  static constexpr int kBoaId = 0;
  static constexpr int kEoaId = 1;
  static constexpr int kOovId = 2;

  Vocabulary();

  // Specials first, then corpus tokens with frequency >= min_count, ordered by
  // descending frequency with lexicographic tie-break. min_count must be >= 1.
  static Vocabulary build(const std::vector<TokenSequence>& corpus, std::size_t min_count);

  std::size_t size() const { return id_to_token_.size(); }  // dictionary size N
  int boa_id() const { return kBoaId; }
  int eoa_id() const { return kEoaId; }
  int oov_id() const { return kOovId; }

  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  // Unknown tokens map to the OOV id; never fails.
  int lookup(const std::string& token) const;
  // Throws std::out_of_range for id >= N.
  const std::string& token(int id) const;

  std::vector<int> encode(const TokenSequence& tokens) const;
  TokenSequence decode(const std::vector<int>& ids) const;

  // One token per line; line number == id; first three lines are the specials.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void add(const std::string& token);

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

}  // namespace mqa
