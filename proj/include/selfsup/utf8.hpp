#pragma once

#include <cstddef>
#include <string_view>

namespace selfsup {

// All span offsets in the output formats count Unicode scalar values, not
// bytes. Continuation bytes are 0b10xxxxxx.
inline std::size_t codepoint_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xc0) != 0x80) ++n;
    }
    return n;
}

// Byte offset of the codepoint with index cp (cp may equal the codepoint
// count, giving s.size()).
inline std::size_t codepoint_to_byte(std::string_view s, std::size_t cp) {
    std::size_t seen = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xc0) != 0x80) {
            if (seen == cp) return i;
            ++seen;
        }
    }
    return s.size();
}

// Substring addressed in codepoints, [from, to).
inline std::string_view codepoint_slice(std::string_view s, std::size_t from, std::size_t to) {
    std::size_t b0 = codepoint_to_byte(s, from);
    std::size_t b1 = codepoint_to_byte(s, to);
    return s.substr(b0, b1 - b0);
}

}  // namespace selfsup
