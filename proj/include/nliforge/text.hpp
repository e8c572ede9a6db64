#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nliforge {

// Splits on Unicode whitespace (UTF-8 input) and counts non-empty tokens.
[[nodiscard]] std::size_t word_count(std::string_view text);

[[nodiscard]] std::vector<std::string> split_words(std::string_view text);

// Trims Unicode whitespace from both ends.
[[nodiscard]] std::string trim(std::string_view text);

// ASCII lowercase + whitespace collapse + trim. Used for domain names and
// for exact-duplicate detection of premise texts.
[[nodiscard]] std::string normalize_name(std::string_view text);

[[nodiscard]] std::string to_lower_ascii(std::string_view text);

// Stable 64-bit FNV-1a; seeds derived from it are reproducible across runs.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer, for combining seeds.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x);

[[nodiscard]] inline std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value + 0x9e3779b97f4a7c15ULL));
}

// Formats `fraction` as a percentage with `decimals` places, e.g. "35.4%".
[[nodiscard]] std::string format_percent(double fraction, int decimals = 1);

// Formats an integer with thousands separators, e.g. "684,929".
[[nodiscard]] std::string format_count(std::uint64_t n);

}  // namespace nliforge
