#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace uxai {

/// 64-bit FNV-1a, incremental.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes) {
    for (auto b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::string_view text) { return update(std::as_bytes(std::span(text.data(), text.size()))); }
  Fnv1a& update(std::span<const float> values) { return update(std::as_bytes(values)); }
  Fnv1a& update(std::uint64_t value) {
    return update(std::as_bytes(std::span<const std::uint64_t, 1>(&value, 1)));
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view text) { return Fnv1a().update(text).digest(); }

std::string hex64(std::uint64_t value);

}  // namespace uxai
