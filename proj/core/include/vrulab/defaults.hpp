#pragma once

#include <cstdint>
#include <map>

// Default experiment setup shared by the command line and the test suite.
namespace vrulab::defaults {

inline const std::map<int, int> kTrainQuotas = {{2, 3000}, {3, 1000}};
inline const std::map<int, int> kHeldoutQuotas = {{2, 300}, {3, 300}};
inline constexpr std::uint64_t kTrainDataSeed = 1;
inline constexpr std::uint64_t kHeldoutDataSeed = 2;

// Echo items mixed into the base model for fine-tuning studies.
inline constexpr int kEchoTrainItems = 4000;
inline constexpr std::uint64_t kEchoTrainSeed = 3;
inline constexpr int kEchoEvalItems = 300;
inline constexpr std::uint64_t kEchoEvalSeed = 4;
// Echo is only picked up late in a longer schedule.
inline constexpr int kBaseEpochs = 10;

// VRU episodes for fine-tuning the mixed base model.
inline const std::map<int, int> kSftQuotas = {{2, 1000}, {3, 1000}};
inline constexpr std::uint64_t kSftDataSeed = 5;

}  // namespace vrulab::defaults
