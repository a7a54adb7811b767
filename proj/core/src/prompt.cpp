#include "vrulab/prompt.hpp"

namespace vrulab::env {

namespace {

constexpr std::string_view kDescription =
    "You are standing inside a room and can observe objects from your current "
    "viewpoint. You will take actions to rotate your viewpoint to the left or right, "
    "after which both your viewpoint and the objects in view changes accordingly. "
    "The actions taken are specified by \"Action:\", and the corresponding objects "
    "you see are specified by \"Observation:\". After taking the final action, "
    "predict the resulting observation. If the observation after the final action "
    "cannot be determined based on previous observations, output unknown.";

constexpr std::string_view kAnswerTagInstruction =
    " Output your final answer wrapped in <ans> and </ans> tags.";

}  // namespace

std::string_view task_description(PromptMode mode) {
  static const std::string think = std::string(kDescription) + std::string(kAnswerTagInstruction);
  return mode == PromptMode::Direct ? kDescription : std::string_view(think);
}

std::string render_dialogue(const Episode& ep) {
  std::string out = "Initial Observation: " + ep.initial_object + "\n";
  const int n = ep.n_steps();
  for (int i = 0; i < n; ++i) {
    out += "Action: Turn to the ";
    out += to_string(ep.steps[i].direction);
    out += " by " + std::to_string(ep.steps[i].angle) + " degrees\n";
    out += "Observation: ";
    if (i + 1 < n) out += ep.observations[i] + "\n";
  }
  return out;
}

std::string render_prompt(const Episode& ep, PromptMode mode) {
  std::string out(task_description(mode));
  out += "\n\n";
  out += render_dialogue(ep);
  return out;
}

std::string render_marked_prompt(const Episode& ep) {
  std::string out(kTaskMarker);
  out += "\n\n";
  out += render_dialogue(ep);
  return out;
}

}  // namespace vrulab::env
