#include "vrulab/bridge_client.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "vrulab/error.hpp"

extern char** environ;

namespace vrulab::bridge {

using json = nlohmann::json;

std::vector<std::size_t> action_newline_offsets(std::string_view prompt) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < prompt.size()) {
    std::size_t end = prompt.find('\n', pos);
    if (end == std::string_view::npos) break;
    if (prompt.substr(pos, 8) == "Action: ") out.push_back(end);
    pos = end + 1;
  }
  return out;
}

BridgeClient::BridgeClient(std::vector<std::string> argv) {
  if (argv.empty()) throw ValidationError("bridge command is empty");
  // A dead child must surface as a write error, not kill this process.
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw RuntimeFailure("pipe: " + std::string(std::strerror(errno)));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) posix_spawn_file_actions_addclose(&actions, fd);

  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);
  const int rc = posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(in_pipe[0]);
  close(out_pipe[1]);
  if (rc != 0) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    throw RuntimeFailure("cannot start bridge '" + argv[0] + "': " + std::strerror(rc));
  }
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

BridgeClient::~BridgeClient() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string BridgeClient::read_line() {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw RuntimeFailure("bridge closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string BridgeClient::request(const std::string& json_line) {
  std::string msg = json_line + "\n";
  std::size_t sent = 0;
  while (sent < msg.size()) {
    const ssize_t n = write(to_child_, msg.data() + sent, msg.size() - sent);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw RuntimeFailure("bridge closed its input");
    sent += static_cast<std::size_t>(n);
  }
  std::string line = read_line();
  json resp;
  try {
    resp = json::parse(line);
  } catch (const json::exception&) {
    throw RuntimeFailure("bridge sent malformed JSON: " + line.substr(0, 200));
  }
  if (!resp.is_object()) throw RuntimeFailure("bridge response is not an object");
  if (resp.contains("error")) throw RuntimeFailure("bridge error: " + resp["error"].dump());
  return line;
}

BridgeInfo BridgeClient::info() {
  const auto resp = json::parse(request(json{{"type", "info"}}.dump()));
  BridgeInfo out;
  try {
    out.n_layers = resp.at("n_layers").get<std::uint32_t>();
    out.d_model = resp.at("d_model").get<std::uint32_t>();
    out.model = resp.at("model").get<std::string>();
  } catch (const json::exception& e) {
    throw RuntimeFailure(std::string("bad info response: ") + e.what());
  }
  return out;
}

std::string BridgeClient::generate(const std::string& prompt, env::PromptMode mode, int max_new_tokens) {
  const json req{{"type", "generate"},
                 {"prompt", prompt},
                 {"mode", mode == env::PromptMode::Direct ? "direct" : "think"},
                 {"max_new_tokens", max_new_tokens}};
  const auto resp = json::parse(request(req.dump()));
  if (!resp.contains("text") || !resp["text"].is_string()) throw RuntimeFailure("generate response lacks text");
  return resp["text"].get<std::string>();
}

HiddenDump BridgeClient::hidden_states(const std::string& prompt, std::span<const std::size_t> positions,
                                       std::int64_t sample_id, const std::string& out_path) {
  for (auto p : positions) {
    if (p >= prompt.size()) throw ValidationError("position " + std::to_string(p) + " outside the prompt");
  }
  const json req{{"type", "hidden_states"},
                 {"prompt", prompt},
                 {"positions", std::vector<std::size_t>(positions.begin(), positions.end())},
                 {"sample_id", sample_id},
                 {"out", out_path}};
  request(req.dump());
  auto dump = load_dump(out_path);
  for (const auto& row : dump.rows) {
    if (row.sample_id != sample_id || row.step >= positions.size()) {
      throw ValidationError("dump row (sample " + std::to_string(row.sample_id) + ", step " +
                            std::to_string(row.step) + ") does not belong to the request");
    }
  }
  return dump;
}

std::vector<eval::PredictionRecord> bridge_predictions(BridgeClient& client, std::span<const env::Episode> episodes,
                                                       env::PromptMode mode) {
  const auto extract = mode == env::PromptMode::Direct ? eval::ExtractMode::Direct : eval::ExtractMode::Tagged;
  const int cap = mode == env::PromptMode::Direct ? kDirectMaxNewTokens : kThinkMaxNewTokens;
  std::vector<eval::PredictionRecord> preds;
  for (const auto& ep : episodes) {
    preds.push_back(eval::make_prediction(ep.id, client.generate(env::render_prompt(ep, mode), mode, cap), extract));
  }
  return preds;
}

HiddenDump bridge_dump(BridgeClient& client, std::span<const env::Episode> episodes, const std::string& scratch_dir) {
  const auto meta = client.info();
  HiddenDump merged;
  merged.n_layers = meta.n_layers;
  merged.d_model = meta.d_model;
  std::filesystem::create_directories(scratch_dir);
  const std::string path = (std::filesystem::path(scratch_dir) / "request.vruh").string();
  for (const auto& ep : episodes) {
    const auto prompt = env::render_prompt(ep, env::PromptMode::Direct);
    const auto offsets = action_newline_offsets(prompt);
    auto part = client.hidden_states(prompt, offsets, ep.id, path);
    check_dump_matches(part, meta.n_layers, meta.d_model);
    if (part.rows.size() != offsets.size() * meta.n_layers) {
      throw ValidationError("bridge returned " + std::to_string(part.rows.size()) + " rows for episode " +
                            std::to_string(ep.id) + ", expected " + std::to_string(offsets.size() * meta.n_layers));
    }
    for (auto& row : part.rows) merged.rows.push_back(std::move(row));
  }
  std::filesystem::remove(path);
  return merged;
}

}  // namespace vrulab::bridge
