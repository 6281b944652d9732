#pragma once

#include <cstdint>

namespace oodreg {

/// Derives an independent 64-bit sub-seed from a parent seed and a stream tag.
/// Pure function: the same (parent, tag, index) always yields the same value.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, std::uint64_t index = 0);

// Stream tags used across the library. Values are arbitrary but frozen: changing
// them changes every generated artifact.
namespace seed_tag {
inline constexpr std::uint64_t kInit = 0x1;
inline constexpr std::uint64_t kShuffle = 0x2;
inline constexpr std::uint64_t kDropout = 0x3;
inline constexpr std::uint64_t kMcPass = 0x4;
inline constexpr std::uint64_t kData = 0x5;
inline constexpr std::uint64_t kCorrupt = 0x6;
inline constexpr std::uint64_t kOodStream = 0x7;
}  // namespace seed_tag

}  // namespace oodreg
