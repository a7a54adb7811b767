#include "vrulab/vocab.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vrulab/error.hpp"

namespace vrulab::model {

namespace {

const std::vector<std::string>& base_tokens() {
  static const std::vector<std::string> tokens = {
      "<PAD>", "<TASK>", "Initial", "Observation", "Action", "Turn", "to", "the", "by",
      "degrees", ":", "\n", "left", "right", "0", "90", "180", "270", "360", "unknown",
      // control task
      "<ECHO>", "List", "Query", "item", "Answer", "1", "2", "3", "4", "5"};
  return tokens;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (int i = 0; i < size(); ++i) {
    if (tokens_[i].empty()) throw ValidationError("vocabulary contains an empty token");
    if (!index_.emplace(tokens_[i], i).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
  newline_id_ = find("\n").value_or(-1);
  unknown_id_ = find(env::kUnknown).value_or(-1);
  if (newline_id_ < 0 || unknown_id_ < 0) {
    throw ValidationError("vocabulary must contain the newline and 'unknown' tokens");
  }
}

Vocab Vocab::for_pool(const env::ObjectPool& pool) {
  std::vector<std::string> tokens = base_tokens();
  for (const auto& name : pool.names()) tokens.push_back(name);
  return Vocab(std::move(tokens));
}

std::optional<int> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id(std::string_view token) const {
  if (auto i = find(token)) return *i;
  throw ValidationError("out-of-vocabulary word '" + std::string(token) + "'");
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::string Vocab::to_json() const { return nlohmann::json(tokens_).dump(); }

Vocab Vocab::from_json(std::string_view text) {
  try {
    return Vocab(nlohmann::json::parse(text).get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed vocabulary file: ") + e.what());
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open vocabulary '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write vocabulary '" + path + "'");
  out << to_json() << '\n';
}

Encoded encode(const Vocab& vocab, std::string_view text) {
  Encoded enc;
  const int action = vocab.find("Action").value_or(-1);
  int line_start = 0;  // index in ids of the first token on the current line
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      enc.ids.push_back(vocab.id(word));
      word.clear();
    }
  };
  for (char c : text) {
    if (c == ' ') {
      flush();
    } else if (c == ':' || c == '\n') {
      flush();
      enc.ids.push_back(vocab.id(std::string_view(&c, 1)));
      if (c == '\n') {
        const int pos = static_cast<int>(enc.ids.size()) - 1;
        if (pos > line_start && enc.ids[line_start] == action) enc.action_newlines.push_back(pos);
        line_start = pos + 1;
      }
    } else {
      word += c;
    }
  }
  flush();
  return enc;
}

std::string decode(const Vocab& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (tok == "\n") {
      out += '\n';
    } else if (tok == ":") {
      out += ": ";
    } else {
      if (!out.empty() && out.back() != '\n' && out.back() != ' ') out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace vrulab::model
