#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace videoeval {

// The five rated dimensions. The enumerator order is the canonical vector
// order used everywhere scores are flattened.
enum class Aspect : std::size_t { vq = 0, tc = 1, dd = 2, tva = 3, fc = 4 };

inline constexpr std::size_t kAspectCount = 5;
inline constexpr std::array<Aspect, kAspectCount> kAllAspects = {
    Aspect::vq, Aspect::tc, Aspect::dd, Aspect::tva, Aspect::fc};

constexpr std::size_t index_of(Aspect a) { return static_cast<std::size_t>(a); }

// Short key used in JSON documents and CLI flags ("vq", "tc", ...).
std::string_view aspect_key(Aspect a);
// Lower-case name used in scorer text output ("visual quality", ...).
std::string_view aspect_phrase(Aspect a);
// Column title used in reports ("VQ", ...).
std::string_view aspect_title(Aspect a);

std::optional<Aspect> aspect_from_key(std::string_view key);

}  // namespace videoeval
