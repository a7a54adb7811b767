#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vrulab::env {

enum class Direction { Left, Right };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

// Absolute facing, degrees clockwise from the initial facing.
class Orientation {
 public:
  constexpr Orientation() = default;
  // Throws ValidationError unless degrees is one of 0, 90, 180, 270.
  explicit Orientation(int degrees);

  constexpr int degrees() const { return degrees_; }
  constexpr int quarter_turns() const { return degrees_ / 90; }

  friend constexpr bool operator==(Orientation, Orientation) = default;
  friend constexpr auto operator<=>(Orientation, Orientation) = default;

 private:
  int degrees_ = 0;
};

inline constexpr int kAngles[] = {0, 90, 180, 270, 360};

struct RotationStep {
  Direction direction = Direction::Right;
  int angle = 0;

  // Throws ValidationError unless angle is in kAngles.
  void validate() const;
  friend bool operator==(const RotationStep&, const RotationStep&) = default;
};

// Right turns are clockwise and add degrees; left turns subtract.
Orientation rotate(Orientation o, RotationStep s);

inline constexpr std::string_view kUnknown = "unknown";

class ObjectPool {
 public:
  // Names must be distinct, non-empty, lowercase and whitespace-free, and may
  // not collide with the "unknown" answer word.
  explicit ObjectPool(std::vector<std::string> names);

  // The 100 shipped indoor objects (core/data/objects.txt).
  static const ObjectPool& default_pool();

  std::span<const std::string> names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool contains(std::string_view name) const;
  // FNV-1a over the newline-joined names, hex encoded.
  std::string checksum() const;

 private:
  std::vector<std::string> names_;
};

struct Episode {
  std::int64_t id = 0;
  std::string initial_object;
  std::vector<RotationStep> steps;
  std::vector<std::string> observations;      // n-1 entries
  std::optional<std::string> ground_truth;    // nullopt means unknown
  std::vector<Orientation> orientation_trace; // n+1 entries

  int n_steps() const { return static_cast<int>(steps.size()); }
  std::string answer_text() const {
    return ground_truth ? *ground_truth : std::string(kUnknown);
  }
  // Object visible before step i is taken (i in [0, n)); index 0 is the
  // initial object.
  const std::string& view_before_step(int i) const {
    return i == 0 ? initial_object : observations[i - 1];
  }
  friend bool operator==(const Episode&, const Episode&) = default;
};

struct EnvState {
  Orientation current;
  std::map<Orientation, std::string> seen;
};

// Scripted generation: steps and the objects to show at each newly visited
// orientation, in order of first visit.
struct ForcedScript {
  std::string initial_object;
  std::vector<RotationStep> steps;
  std::vector<std::string> fresh_objects;
};

// Deterministic in (seed, n_steps, pool). With a script, the script replaces
// all sampling; a script inconsistent with the replay rule throws
// ValidationError naming the offending step.
Episode generate_episode(std::uint64_t seed, int n_steps, const ObjectPool& pool,
                         const std::optional<ForcedScript>& forced = std::nullopt);

Episode replay_script(const ForcedScript& script);

// Recomputes the answer from steps and observations only, tracking the facing
// as a unit vector. Throws ValidationError if the observations contradict the
// replay rule.
std::optional<std::string> ground_truth_oracle(const Episode& ep);

// Checks every Episode invariant, including the stored ground truth.
void validate_episode(const Episode& ep);

}  // namespace vrulab::env
