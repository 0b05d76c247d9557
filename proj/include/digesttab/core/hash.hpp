#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace digesttab {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view data);

/// SplitMix64 finalizer, used to derive independent RNG seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace digesttab
