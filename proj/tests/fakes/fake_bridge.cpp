// Stand-in for a model bridge, speaking the stdio JSON Lines protocol.
// Answers generate requests with the oracle and writes hidden states that
// encode each action's direction and angle.
//   fake_bridge [oracle|wrong-dmodel|refuse]
#include <algorithm>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "vrulab/hidden_dump.hpp"
#include "vrulab/rotation_env.hpp"

using json = nlohmann::json;
using namespace vrulab;

namespace {

constexpr std::uint32_t kLayers = 2;
constexpr std::uint32_t kWidth = 4;

env::ForcedScript parse_dialogue(const std::string& prompt) {
  env::ForcedScript s;
  std::istringstream in(prompt);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("Initial Observation: ", 0) == 0) {
      s.initial_object = line.substr(21);
    } else if (line.rfind("Action: Turn to the ", 0) == 0) {
      std::istringstream words(line.substr(20));
      std::string dir, by;
      int angle = 0;
      words >> dir >> by >> angle;
      s.steps.push_back({env::parse_direction(dir), angle});
    } else if (line.rfind("Observation: ", 0) == 0 && line.size() > 13) {
      s.fresh_objects.push_back(line.substr(13));
    }
  }
  return s;
}

// Observations repeat when an orientation is revisited; keep only first sightings.
env::Episode replay(const std::string& prompt) {
  auto s = parse_dialogue(prompt);
  const auto seen = s.fresh_objects;
  s.fresh_objects.clear();
  std::vector<int> visited = {0};
  int o = 0;
  for (std::size_t i = 0; i + 1 < s.steps.size(); ++i) {
    o = ((o + (s.steps[i].direction == env::Direction::Right ? 1 : -1) * s.steps[i].angle) % 360 + 360) % 360;
    if (std::find(visited.begin(), visited.end(), o) == visited.end()) {
      visited.push_back(o);
      s.fresh_objects.push_back(seen.at(i));
    }
  }
  return env::replay_script(s);
}

json hidden_states(const json& req, std::uint32_t width) {
  const auto prompt = req.at("prompt").get<std::string>();
  const auto positions = req.at("positions").get<std::vector<std::size_t>>();
  bridge::HiddenDump dump;
  dump.n_layers = kLayers;
  dump.d_model = width;
  for (std::uint32_t step = 0; step < positions.size(); ++step) {
    const auto pos = positions[step];
    if (pos >= prompt.size()) return {{"error", "position " + std::to_string(pos) + " outside prompt"}};
    const auto start = prompt.rfind('\n', pos == 0 ? 0 : pos - 1);
    const auto line = prompt.substr(start == std::string::npos ? 0 : start + 1, pos - (start + 1));
    const double right = line.find("right") != std::string::npos ? 1.0 : 0.0;
    for (std::uint32_t l = 0; l < kLayers; ++l) {
      std::vector<double> v(width, 0.0);
      v[0] = right;
      v[1] = static_cast<double>(l);
      v[2] = static_cast<double>(step);
      dump.rows.push_back({l, req.at("sample_id").get<std::int64_t>(), step, v});
    }
  }
  bridge::save_dump(req.at("out").get<std::string>(), dump);
  return {{"ok", true}, {"rows", dump.rows.size()}};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "oracle";
  std::string line;
  while (std::getline(std::cin, line)) {
    json resp;
    try {
      const auto req = json::parse(line);
      const auto type = req.at("type").get<std::string>();
      if (mode == "refuse") {
        resp = {{"error", "model failed to load"}};
      } else if (type == "info") {
        resp = {{"n_layers", kLayers}, {"d_model", kWidth}, {"model", "fake"}};
      } else if (type == "generate") {
        const auto ep = replay(req.at("prompt").get<std::string>());
        const auto answer = ep.answer_text();
        resp = {{"text", req.at("mode") == "think" ? "Let me track it. <ans>" + answer + "</ans>" : answer}};
      } else if (type == "hidden_states") {
        resp = hidden_states(req, mode == "wrong-dmodel" ? kWidth - 1 : kWidth);
      } else {
        resp = {{"error", "unknown request type '" + type + "'"}};
      }
    } catch (const std::exception& e) {
      resp = {{"error", e.what()}};
    }
    std::cout << resp.dump() << std::endl;
  }
  return 0;
}
