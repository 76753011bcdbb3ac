#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tokenrl {

struct UnknownTokenError : std::runtime_error {
  explicit UnknownTokenError(const std::string& token)
      : std::runtime_error("unknown token: \"" + token + "\""), token(token) {}
  std::string token;
};

// Dense token<->id bijection with reserved PAD/BOS/EOS entries at the front.
// Ids are contiguous in [0, size()).
class Vocabulary {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kBos = "<bos>";
  static constexpr const char* kEos = "<eos>";

  Vocabulary() = default;

  // Builds a vocabulary from a token corpus: reserved tokens first, then all
  // distinct corpus tokens ordered by frequency (desc), ties lexicographic.
  static Vocabulary build(
      const std::vector<std::vector<std::string>>& corpus);

  int size() const { return static_cast<int>(tokens_.size()); }
  int pad_id() const { return 0; }
  int bos_id() const { return 1; }
  int eos_id() const { return 2; }

  bool contains(const std::string& token) const {
    return index_.count(token) > 0;
  }
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  void rebuild_index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace tokenrl
