#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrulab/rotation_env.hpp"

namespace vrulab::env {

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::map<int, int> quotas;  // n_steps -> episode count
  bool dedup = true;
  int attempt_factor = 10;    // dedup gives up after attempt_factor * quota draws
};

struct BucketStats {
  int quota = 0;
  int achieved = 0;
  int attempts = 0;
  friend bool operator==(const BucketStats&, const BucketStats&) = default;
};

struct Manifest {
  std::uint64_t seed = 0;
  bool dedup = true;
  std::map<int, BucketStats> buckets;
  std::size_t pool_size = 0;
  std::string pool_checksum;
  std::vector<std::string> warnings;
};

struct Dataset {
  std::vector<Episode> episodes;
  Manifest manifest;
};

// Episode (bucket n, attempt k) is drawn with seed derive_seed(seed, n, k), so
// the output does not depend on generation order. Ids are assigned in
// ascending bucket order.
Dataset generate_dataset(const DatasetConfig& config, const ObjectPool& pool);

// Identity used for deduplication: steps, initial object and the order in
// which fresh objects appear.
std::string dedup_key(const Episode& ep);

std::string episode_to_json(const Episode& ep);
Episode episode_from_json(std::string_view line);

void write_episodes(std::ostream& out, std::span<const Episode> episodes);
std::vector<Episode> read_episodes(std::istream& in);
std::vector<Episode> read_episodes_file(const std::string& path);

// Manifest JSON also carries both task-description texts.
std::string manifest_to_json(const Manifest& m);

}  // namespace vrulab::env
