#include "nliforge/brace_format.hpp"

#include <cctype>
#include <stdexcept>

namespace nliforge::brace {

bool is_brace_safe(std::string_view value) { return value.find('}') == std::string_view::npos; }

std::string open_field(std::string_view name) {
    std::string out(name);
    out += ": {";
    return out;
}

std::string render_field(std::string_view name, std::string_view value) {
    if (!is_brace_safe(value)) {
        throw std::invalid_argument("value of field '" + std::string(name) + "' contains '}'");
    }
    std::string out = open_field(name);
    out += value;
    out += '}';
    return out;
}

std::optional<FieldMatch> extract_field(std::string_view text, std::string_view name, std::size_t from) {
    const std::string opener = open_field(name);
    std::size_t pos = from;
    while (true) {
        pos = text.find(opener, pos);
        if (pos == std::string_view::npos) return std::nullopt;
        // Reject matches inside a longer identifier, e.g. "subdomain: {".
        const bool at_boundary = pos == 0 || !(std::isalnum(static_cast<unsigned char>(text[pos - 1])) ||
                                               text[pos - 1] == '_');
        if (at_boundary) break;
        pos += 1;
    }
    const std::size_t start = pos + opener.size();
    const std::size_t close = text.find('}', start);
    if (close == std::string_view::npos) return std::nullopt;
    return FieldMatch{std::string(text.substr(start, close - start)), close + 1};
}

std::string_view truncate_at_close(std::string_view text) {
    const std::size_t close = text.find('}');
    return close == std::string_view::npos ? text : text.substr(0, close);
}

}  // namespace nliforge::brace
