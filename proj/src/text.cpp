#include "nliforge/text.hpp"

#include <cstdio>

namespace nliforge {

namespace {

// Decodes one UTF-8 code point starting at `pos`; returns its byte length.
// Invalid sequences decode as a single opaque byte.
std::size_t decode_utf8(std::string_view s, std::size_t pos, char32_t& cp) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    auto cont = [&](std::size_t i) -> int {
        if (pos + i >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[pos + i]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (b0 < 0x80) {
        cp = b0;
        return 1;
    }
    if ((b0 & 0xE0) == 0xC0) {
        const int c1 = cont(1);
        if (c1 >= 0) {
            cp = (char32_t(b0 & 0x1F) << 6) | char32_t(c1);
            return 2;
        }
    } else if ((b0 & 0xF0) == 0xE0) {
        const int c1 = cont(1), c2 = cont(2);
        if (c1 >= 0 && c2 >= 0) {
            cp = (char32_t(b0 & 0x0F) << 12) | (char32_t(c1) << 6) | char32_t(c2);
            return 3;
        }
    } else if ((b0 & 0xF8) == 0xF0) {
        const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
        if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
            cp = (char32_t(b0 & 0x07) << 18) | (char32_t(c1) << 12) | (char32_t(c2) << 6) | char32_t(c3);
            return 4;
        }
    }
    cp = 0xFFFD;
    return 1;
}

// White_Space property of the Unicode character database.
bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

template <typename OnToken>
void for_each_token(std::string_view text, OnToken on_token) {
    std::size_t pos = 0;
    std::size_t start = std::string_view::npos;
    while (pos < text.size()) {
        char32_t cp = 0;
        const std::size_t len = decode_utf8(text, pos, cp);
        if (is_unicode_space(cp)) {
            if (start != std::string_view::npos) {
                on_token(text.substr(start, pos - start));
                start = std::string_view::npos;
            }
        } else if (start == std::string_view::npos) {
            start = pos;
        }
        pos += len;
    }
    if (start != std::string_view::npos) on_token(text.substr(start));
}

}  // namespace

std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    for_each_token(text, [&](std::string_view) { ++n; });
    return n;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    for_each_token(text, [&](std::string_view tok) { out.emplace_back(tok); });
    return out;
}

std::string trim(std::string_view text) {
    std::size_t first = std::string_view::npos;
    std::size_t last_end = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp = 0;
        const std::size_t len = decode_utf8(text, pos, cp);
        if (!is_unicode_space(cp)) {
            if (first == std::string_view::npos) first = pos;
            last_end = pos + len;
        }
        pos += len;
    }
    if (first == std::string_view::npos) return {};
    return std::string(text.substr(first, last_end - first));
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string normalize_name(std::string_view text) {
    std::string out;
    for_each_token(text, [&](std::string_view tok) {
        if (!out.empty()) out.push_back(' ');
        out.append(tok);
    });
    return to_lower_ascii(out);
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::string format_percent(double fraction, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f%%", decimals, fraction * 100.0);
    return buf;
}

std::string format_count(std::uint64_t n) {
    std::string digits = std::to_string(n);
    std::string out;
    const std::size_t lead = digits.size() % 3;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i != 0 && (i % 3) == lead) out.push_back(',');
        out.push_back(digits[i]);
    }
    return out;
}

}  // namespace nliforge
