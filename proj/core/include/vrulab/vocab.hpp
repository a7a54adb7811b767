#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vrulab/rotation_env.hpp"

namespace vrulab::model {

// Word-level vocabulary. Layout: <PAD>, <TASK>, the prompt's structural
// words, directions, angles, "unknown", the control-task words, then the
// object pool in pool order.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> tokens);

  static Vocab for_pool(const env::ObjectPool& pool);

  int id(std::string_view token) const;  // throws ValidationError if absent
  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  std::span<const std::string> tokens() const { return tokens_; }

  int newline_id() const { return newline_id_; }
  int unknown_id() const { return unknown_id_; }

  // JSON array of token strings.
  std::string to_json() const;
  static Vocab from_json(std::string_view text);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int newline_id_ = -1;
  int unknown_id_ = -1;
};

struct Encoded {
  std::vector<int> ids;
  // Index of the newline token ending each "Action: ..." line.
  std::vector<int> action_newlines;
};

// Splits on spaces; ":" and "\n" are tokens of their own. A trailing space
// is dropped.
Encoded encode(const Vocab& vocab, std::string_view text);

// Inverse of encode on rendered prompts: words are space separated, ":" is
// followed by a space, "\n" is glued to its neighbours.
std::string decode(const Vocab& vocab, std::span<const int> ids);

}  // namespace vrulab::model
