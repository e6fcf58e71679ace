#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace videoeval {

// Warning sink. Defaults to stderr; tests and the CLI may redirect it.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

// Portable uniform draw in [0, n). std::uniform_int_distribution is not
// specified bit-for-bit, so seeded selections use this instead.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

// Fisher-Yates over the first `count` positions of `items`; only those
// positions are meaningful afterwards.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count && i + 1 < items.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, items.size() - i));
    std::swap(items[i], items[j]);
  }
}

// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delimiter);

}  // namespace videoeval
