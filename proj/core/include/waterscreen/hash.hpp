#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "waterscreen/errors.hpp"

namespace waterscreen {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Streaming FNV-1a over a file's bytes; used for output fingerprints.
inline std::string hash_file_hex(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path + " for hashing");
    std::uint64_t h = kFnvOffset;
    char buf[1 << 16];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) {
        h = fnv1a64(std::string_view(buf, n), h);
    }
    bool bad = std::ferror(f) != 0;
    std::fclose(f);
    if (bad) throw IoError("read failure hashing " + path);
    return hex64(h);
}

} // namespace waterscreen
