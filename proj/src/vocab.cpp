#include "tokenrl/vocab.hpp"

#include <algorithm>
#include <map>

namespace tokenrl {

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& corpus) {
  if (corpus.empty()) {
    throw std::invalid_argument("Vocabulary::build: empty corpus");
  }
  std::map<std::string, long> freq;
  for (const auto& seq : corpus) {
    for (const auto& tok : seq) ++freq[tok];
  }
  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.tokens_ = {kPad, kBos, kEos};
  for (const auto& [tok, n] : entries) {
    if (tok == kPad || tok == kBos || tok == kEos) continue;
    v.tokens_.push_back(tok);
  }
  v.rebuild_index();
  return v;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    index_[tokens_[i]] = i;
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw UnknownTokenError(token);
  return it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("Vocabulary::token_of: id " + std::to_string(id) +
                            " outside [0, " + std::to_string(size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(
    std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(id_of(tok));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token_of(id));
  return out;
}

}  // namespace tokenrl
