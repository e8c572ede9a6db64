#pragma once

#include <optional>
#include <string>
#include <string_view>

// Brace-delimited field grammar shared by the generation prompts.
//
// A field is written `name: {value}`. On parse, the value is every character
// after `name: {` up to the first `}`; there is no nesting and no escaping, so
// values containing `}` cannot be represented and are rejected on render.
namespace nliforge::brace {

[[nodiscard]] bool is_brace_safe(std::string_view value);

// "name: {value}". Throws std::invalid_argument if value contains '}'.
[[nodiscard]] std::string render_field(std::string_view name, std::string_view value);

// Opening cue "name: {" left open for the model to complete.
[[nodiscard]] std::string open_field(std::string_view name);

struct FieldMatch {
    std::string value;
    std::size_t end = 0;  // offset just past the closing '}'
};

// Finds `name: {` at or after `from` and returns the value up to the first '}'.
// nullopt if the opener is absent or the field is never closed.
[[nodiscard]] std::optional<FieldMatch> extract_field(std::string_view text, std::string_view name,
                                                      std::size_t from = 0);

// Prefix of `text` before the first '}' (the whole text if there is none).
[[nodiscard]] std::string_view truncate_at_close(std::string_view text);

}  // namespace nliforge::brace
