#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cuneid {

// Strict UTF-8 decoder: rejects truncated sequences, stray continuation
// bytes, overlong forms, surrogates, and values above U+10FFFF. Reported
// offsets are offset_base plus the byte position within `bytes`.
inline std::u32string decode_utf8(std::string_view bytes, std::size_t offset_base = 0) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const auto fail = [&](std::size_t at) {
    throw std::runtime_error("invalid UTF-8 at byte offset " +
                             std::to_string(offset_base + at));
  };
  while (i < bytes.size()) {
    const unsigned char b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    }
    int len;
    char32_t cp;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      fail(i);
      return out;  // unreachable
    }
    if (i + len > bytes.size()) fail(i);
    for (int j = 1; j < len; ++j) {
      const unsigned char bj = static_cast<unsigned char>(bytes[i + j]);
      if ((bj & 0xC0) != 0x80) fail(i + j);
      cp = (cp << 6) | (bj & 0x3F);
    }
    static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len]) fail(i);                    // overlong
    if (cp >= 0xD800 && cp <= 0xDFFF) fail(i);      // surrogate
    if (cp > 0x10FFFF) fail(i);
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size() * 3);
  for (char32_t cp : text) append_utf8(out, cp);
  return out;
}

}  // namespace cuneid
