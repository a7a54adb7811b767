#include "vrulab/dataset.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "vrulab/error.hpp"
#include "vrulab/prompt.hpp"
#include "vrulab/rng.hpp"

namespace vrulab::env {

using ordered_json = nlohmann::ordered_json;

std::string dedup_key(const Episode& ep) {
  std::string key = ep.initial_object;
  for (const auto& s : ep.steps) {
    key += s.direction == Direction::Left ? "|L" : "|R";
    key += std::to_string(s.angle);
  }
  key += '#';
  std::set<std::string_view> shown{ep.initial_object};
  for (const auto& o : ep.observations) {
    if (shown.insert(o).second) key += o + ",";
  }
  return key;
}

Dataset generate_dataset(const DatasetConfig& config, const ObjectPool& pool) {
  Dataset ds;
  ds.manifest.seed = config.seed;
  ds.manifest.dedup = config.dedup;
  ds.manifest.pool_size = pool.size();
  ds.manifest.pool_checksum = pool.checksum();

  std::int64_t next_id = 0;
  for (const auto& [n_steps, quota] : config.quotas) {
    if (quota < 0) throw ValidationError("quota for " + std::to_string(n_steps) + "-step is negative");
    if (n_steps < 1) throw ValidationError("n_steps must be >= 1, got " + std::to_string(n_steps));
    BucketStats stats;
    stats.quota = quota;
    const long long cap = config.dedup ? static_cast<long long>(config.attempt_factor) * quota : quota;
    std::set<std::string> keys;
    while (stats.achieved < quota && stats.attempts < cap) {
      const auto seed = derive_seed(config.seed, static_cast<std::uint64_t>(n_steps),
                                    static_cast<std::uint64_t>(stats.attempts));
      ++stats.attempts;
      Episode ep = generate_episode(seed, n_steps, pool);
      if (config.dedup && !keys.insert(dedup_key(ep)).second) continue;
      ep.id = next_id++;
      ds.episodes.push_back(std::move(ep));
      ++stats.achieved;
    }
    if (stats.achieved < quota) {
      ds.manifest.warnings.push_back(std::to_string(n_steps) + "-step bucket reached " +
                                     std::to_string(stats.achieved) + " of " +
                                     std::to_string(quota) + " after " +
                                     std::to_string(stats.attempts) + " attempts");
    }
    ds.manifest.buckets[n_steps] = stats;
  }
  return ds;
}

std::string episode_to_json(const Episode& ep) {
  ordered_json j;
  j["id"] = ep.id;
  j["n_steps"] = ep.n_steps();
  j["initial_object"] = ep.initial_object;
  ordered_json steps = ordered_json::array();
  for (const auto& s : ep.steps) {
    ordered_json js;
    js["dir"] = to_string(s.direction);
    js["angle"] = s.angle;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  j["observations"] = ep.observations;
  j["ground_truth"] = ep.answer_text();
  ordered_json trace = ordered_json::array();
  for (auto o : ep.orientation_trace) trace.push_back(o.degrees());
  j["orientation_trace"] = std::move(trace);
  return j.dump();
}

Episode episode_from_json(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Episode ep;
    ep.id = j.at("id").get<std::int64_t>();
    ep.initial_object = j.at("initial_object").get<std::string>();
    for (const auto& js : j.at("steps")) {
      RotationStep s;
      s.direction = parse_direction(js.at("dir").get<std::string>());
      s.angle = js.at("angle").get<int>();
      s.validate();
      ep.steps.push_back(s);
    }
    ep.observations = j.at("observations").get<std::vector<std::string>>();
    const auto gt = j.at("ground_truth").get<std::string>();
    if (gt != kUnknown) ep.ground_truth = gt;
    for (int deg : j.at("orientation_trace")) ep.orientation_trace.emplace_back(deg);
    if (j.at("n_steps").get<int>() != ep.n_steps()) {
      throw ValidationError("episode " + std::to_string(ep.id) + ": n_steps disagrees with steps");
    }
    validate_episode(ep);
    return ep;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed episode record: ") + e.what());
  }
}

void write_episodes(std::ostream& out, std::span<const Episode> episodes) {
  for (const auto& ep : episodes) out << episode_to_json(ep) << '\n';
}

std::vector<Episode> read_episodes(std::istream& in) {
  std::vector<Episode> eps;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    eps.push_back(episode_from_json(line));
  }
  return eps;
}

std::vector<Episode> read_episodes_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  return read_episodes(in);
}

std::string manifest_to_json(const Manifest& m) {
  ordered_json j;
  j["seed"] = m.seed;
  j["dedup"] = m.dedup;
  ordered_json quotas = ordered_json::object();
  ordered_json achieved = ordered_json::object();
  ordered_json attempts = ordered_json::object();
  for (const auto& [n, b] : m.buckets) {
    quotas[std::to_string(n)] = b.quota;
    achieved[std::to_string(n)] = b.achieved;
    attempts[std::to_string(n)] = b.attempts;
  }
  j["quotas"] = std::move(quotas);
  j["achieved"] = std::move(achieved);
  j["attempts"] = std::move(attempts);
  j["pool_size"] = m.pool_size;
  j["pool_checksum"] = m.pool_checksum;
  j["task_description"] = {{"direct", std::string(task_description(PromptMode::Direct))},
                           {"think", std::string(task_description(PromptMode::Think))}};
  j["warnings"] = m.warnings;
  return j.dump(2) + "\n";
}

}  // namespace vrulab::env
