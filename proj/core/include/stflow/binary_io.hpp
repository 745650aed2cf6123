#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace stflow::io {

static_assert(std::endian::native == std::endian::little,
              "artifact payloads are written in native order; big-endian hosts need byte swaps");

/// Writes through `fill` into a sibling temp file, then renames over `path`.
/// A crash mid-write never leaves a truncated artifact behind.
void write_atomic(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& fill);

void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text(const std::filesystem::path& path);

template <typename T>
void write_le(std::ostream& os, std::span<const T> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
bool read_le(std::istream& is, std::span<T> values) {
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  return static_cast<std::size_t>(is.gcount()) == values.size_bytes();
}

/// FNV-1a, 64-bit. Stable across platforms; used for fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

/// Fingerprint of a whole file's bytes.
std::uint64_t file_fingerprint(const std::filesystem::path& path);

}  // namespace stflow::io
