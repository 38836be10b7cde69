#include "mqa/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mqa {

Vocabulary::Vocabulary() {
  add(kBoaToken);
  add(kEoaToken);
  add(kOovToken);
}

void Vocabulary::add(const std::string& token) {
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<TokenSequence>& corpus, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("Vocabulary::build: min_count must be >= 1");
  // std::map keeps tokens ordered so equal-frequency ties come out lexicographic.
  std::map<std::string, std::size_t> freq;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) ++freq[tok];

  std::vector<std::pair<std::string, std::size_t>> kept;
  Vocabulary v;
  for (const auto& [tok, n] : freq) {
    if (n < min_count) continue;
    if (v.contains(tok)) continue;  // corpus literal of a special token
    kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : kept) v.add(tok);
  return v;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kOovId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw std::out_of_range("Vocabulary: id " + std::to_string(id) +
                            " out of range, dictionary size is " +
                            std::to_string(id_to_token_.size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const TokenSequence& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(lookup(tok));
  return ids;
}

TokenSequence Vocabulary::decode(const std::vector<int>& ids) const {
  TokenSequence tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token(id));
  return tokens;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path.string());
  for (const auto& tok : id_to_token_) out << tok << '\n';
  if (!out) throw std::runtime_error("Vocabulary::save: write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path.string());
  Vocabulary v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= 3) {
      const char* expected = lineno == 1 ? kBoaToken : lineno == 2 ? kEoaToken : kOovToken;
      if (line != expected)
        throw std::runtime_error("Vocabulary::load: line " + std::to_string(lineno) + " of " +
                                 path.string() + " must be the special token " + expected);
      continue;
    }
    if (line.empty())
      throw std::runtime_error("Vocabulary::load: empty token at line " + std::to_string(lineno) +
                               " of " + path.string());
    if (v.contains(line))
      throw std::runtime_error("Vocabulary::load: duplicate token at line " +
                               std::to_string(lineno) + " of " + path.string());
    v.add(line);
  }
  if (lineno < 3)
    throw std::runtime_error("Vocabulary::load: " + path.string() +
                             " is missing the three special-token lines");
  return v;
}

}  // namespace mqa
