#include "vrulab/rotation_env.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "vrulab/error.hpp"
#include "vrulab/rng.hpp"

namespace vrulab::env {

namespace detail {
// Generated from core/data/objects.txt.
std::vector<std::string> default_object_names();
}  // namespace detail

std::string_view to_string(Direction d) {
  return d == Direction::Left ? "left" : "right";
}

Direction parse_direction(std::string_view s) {
  if (s == "left") return Direction::Left;
  if (s == "right") return Direction::Right;
  throw ValidationError("invalid direction '" + std::string(s) + "'");
}

Orientation::Orientation(int degrees) : degrees_(degrees) {
  if (degrees < 0 || degrees >= 360 || degrees % 90 != 0) {
    throw ValidationError("invalid orientation " + std::to_string(degrees));
  }
}

void RotationStep::validate() const {
  if (std::find(std::begin(kAngles), std::end(kAngles), angle) == std::end(kAngles)) {
    throw ValidationError("invalid rotation angle " + std::to_string(angle));
  }
}

Orientation rotate(Orientation o, RotationStep s) {
  s.validate();
  const int delta = s.direction == Direction::Right ? s.angle : -s.angle;
  return Orientation(((o.degrees() + delta) % 360 + 360) % 360);
}

ObjectPool::ObjectPool(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string_view> distinct;
  for (const auto& n : names_) {
    if (n.empty()) throw ValidationError("object pool contains an empty name");
    for (unsigned char c : n) {
      if (std::isspace(c) || std::isupper(c)) {
        throw ValidationError("object name '" + n + "' must be lowercase without whitespace");
      }
    }
    if (n == kUnknown) throw ValidationError("object pool may not contain 'unknown'");
    if (!distinct.insert(n).second) throw ValidationError("duplicate object name '" + n + "'");
  }
}

const ObjectPool& ObjectPool::default_pool() {
  static const ObjectPool pool(detail::default_object_names());
  return pool;
}

bool ObjectPool::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::string ObjectPool::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& n : names_) {
    for (unsigned char c : n) {
      h = (h ^ c) * 0x100000001b3ULL;
    }
    h = (h ^ '\n') * 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string step_label(int i) { return "step " + std::to_string(i + 1); }

// Shared replay loop. `next_fresh` supplies an object for each newly visited
// orientation; it is called with the index of the step that needs it.
template <typename FreshFn>
Episode run_environment(std::string initial, std::vector<RotationStep> steps,
                        FreshFn&& next_fresh) {
  if (steps.empty()) throw ValidationError("an episode needs at least one step");
  Episode ep;
  ep.initial_object = std::move(initial);
  ep.steps = std::move(steps);

  EnvState state;
  state.seen.emplace(state.current, ep.initial_object);
  ep.orientation_trace.push_back(state.current);

  const int n = ep.n_steps();
  for (int i = 0; i < n; ++i) {
    state.current = rotate(state.current, ep.steps[i]);
    ep.orientation_trace.push_back(state.current);
    if (i == n - 1) break;
    auto it = state.seen.find(state.current);
    if (it == state.seen.end()) {
      std::string obj = next_fresh(i);
      for (const auto& [o, name] : state.seen) {
        if (name == obj) {
          throw ValidationError(step_label(i) + ": object '" + obj +
                                "' already shown at orientation " +
                                std::to_string(o.degrees()));
        }
      }
      it = state.seen.emplace(state.current, std::move(obj)).first;
    }
    ep.observations.push_back(it->second);
  }
  auto last = state.seen.find(state.current);
  if (last != state.seen.end()) ep.ground_truth = last->second;
  return ep;
}

}  // namespace

Episode replay_script(const ForcedScript& script) {
  std::size_t used = 0;
  Episode ep = run_environment(script.initial_object, script.steps, [&](int i) {
    if (used >= script.fresh_objects.size()) {
      throw ValidationError(step_label(i) +
                            ": script ran out of fresh objects for a new orientation");
    }
    return script.fresh_objects[used++];
  });
  if (used != script.fresh_objects.size()) {
    throw ValidationError("script supplies " + std::to_string(script.fresh_objects.size()) +
                          " fresh objects but only " + std::to_string(used) +
                          " orientations are newly visited before the final step");
  }
  return ep;
}

Episode generate_episode(std::uint64_t seed, int n_steps, const ObjectPool& pool,
                         const std::optional<ForcedScript>& forced) {
  if (forced) return replay_script(*forced);
  if (n_steps < 1) throw ValidationError("n_steps must be >= 1");
  if (pool.size() < 4) throw ValidationError("object pool needs at least 4 names");

  Rng rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> angle_pick(0, 4);

  // Objects are drawn without replacement: a partial Fisher-Yates over the
  // pool indices.
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t drawn = 0;
  auto draw = [&]() -> const std::string& {
    std::uniform_int_distribution<std::size_t> pick(drawn, order.size() - 1);
    std::swap(order[drawn], order[pick(rng)]);
    return pool.names()[order[drawn++]];
  };

  std::string initial = draw();
  std::vector<RotationStep> steps;
  steps.reserve(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    RotationStep s;
    s.direction = coin(rng) ? Direction::Right : Direction::Left;
    s.angle = kAngles[angle_pick(rng)];
    steps.push_back(s);
  }
  return run_environment(std::move(initial), std::move(steps),
                         [&](int) { return draw(); });
}

std::optional<std::string> ground_truth_oracle(const Episode& ep) {
  // Facing tracked as an integer unit vector; a right turn by 90 degrees maps
  // (x, y) to (y, -x).
  struct Facing {
    int x = 0, y = 1;
    bool operator==(const Facing&) const = default;
  };
  auto turn = [](Facing f, const RotationStep& s) {
    const int quarter = (s.angle / 90) % 4;
    for (int k = 0; k < quarter; ++k) {
      f = s.direction == Direction::Right ? Facing{f.y, -f.x} : Facing{-f.y, f.x};
    }
    return f;
  };

  const int n = ep.n_steps();
  if (n < 1) throw ValidationError("episode has no steps");
  if (static_cast<int>(ep.observations.size()) != n - 1) {
    throw ValidationError("episode " + std::to_string(ep.id) + " has " +
                          std::to_string(ep.observations.size()) +
                          " observations, expected " + std::to_string(n - 1));
  }
  std::vector<std::pair<Facing, std::string>> memory;
  Facing f;
  for (int i = 0; i < n; ++i) {
    const std::string& view = ep.view_before_step(i);
    auto it = std::find_if(memory.begin(), memory.end(),
                           [&](const auto& m) { return m.first == f; });
    if (it == memory.end()) {
      memory.emplace_back(f, view);
    } else if (it->second != view) {
      throw ValidationError("episode " + std::to_string(ep.id) + " step " +
                            std::to_string(i) + ": observation '" + view +
                            "' contradicts earlier '" + it->second +
                            "' at the same facing");
    }
    f = turn(f, ep.steps[i]);
  }
  for (const auto& [facing, name] : memory) {
    if (facing == f) return name;
  }
  return std::nullopt;
}

void validate_episode(const Episode& ep) {
  const int n = ep.n_steps();
  const std::string who = "episode " + std::to_string(ep.id);
  if (n < 1) throw ValidationError(who + ": no steps");
  for (const auto& s : ep.steps) s.validate();
  if (static_cast<int>(ep.orientation_trace.size()) != n + 1) {
    throw ValidationError(who + ": orientation trace length mismatch");
  }
  if (ep.orientation_trace[0] != Orientation(0)) {
    throw ValidationError(who + ": orientation trace must start at 0");
  }
  for (int i = 0; i < n; ++i) {
    if (ep.orientation_trace[i + 1] != rotate(ep.orientation_trace[i], ep.steps[i])) {
      throw ValidationError(who + ": orientation trace inconsistent at step " +
                            std::to_string(i + 1));
    }
  }
  // Distinct orientations must carry distinct objects.
  std::map<Orientation, std::string> by_orientation;
  std::set<std::string> names;
  for (int i = 0; i < n; ++i) {
    auto [it, inserted] = by_orientation.emplace(ep.orientation_trace[i], ep.view_before_step(i));
    if (inserted && !names.insert(it->second).second) {
      throw ValidationError(who + ": object '" + it->second +
                            "' shown at two different orientations");
    }
  }
  auto expected = ground_truth_oracle(ep);
  if (expected != ep.ground_truth) {
    throw ValidationError(who + ": stored ground truth '" + ep.answer_text() +
                          "' disagrees with recomputed '" +
                          (expected ? *expected : std::string(kUnknown)) + "'");
  }
}

}  // namespace vrulab::env
