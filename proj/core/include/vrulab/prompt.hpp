#pragma once

#include <string>
#include <string_view>

#include "vrulab/rotation_env.hpp"

namespace vrulab::env {

enum class PromptMode { Direct, Think };

// The instruction paragraph that opens every prompt.
std::string_view task_description(PromptMode mode);

inline constexpr std::string_view kTaskMarker = "<TASK>";

// Full prompt text:
//   <task description>\n
//   \n
//   Initial Observation: X\n
//   Action: Turn to the {left|right} by {angle} degrees\n
//   Observation: Y\n
//   ...
//   Action: ...\n
//   Observation: <- trailing space, no newline
std::string render_prompt(const Episode& ep, PromptMode mode);

// Everything after the task description (starting at "Initial Observation").
std::string render_dialogue(const Episode& ep);

// The prompt with the task description collapsed to kTaskMarker, which is the
// form the toy model consumes.
std::string render_marked_prompt(const Episode& ep);

}  // namespace vrulab::env
