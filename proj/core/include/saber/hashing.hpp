#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace saber {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Stage seed: the first 8 bytes (big-endian) of SHA-256("<seed>/<stage>").
// Stages are independently reproducible from the run seed alone.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

// Reads a whole file; throws Error when unreadable.
std::string read_file(const std::filesystem::path& path);
// Writes atomically enough for our purposes (temp file + rename).
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace saber
