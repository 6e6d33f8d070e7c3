#include "saber/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>

#include <fmt/format.h>

#include "saber/error.hpp"

namespace saber {

namespace {

std::array<unsigned char, 32> digest(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  std::array<unsigned char, 32> out{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
    throw Error("sha256 failed");
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::string hex;
  hex.reserve(64);
  for (unsigned char c : digest(data)) hex += fmt::format("{:02x}", c);
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  const auto d = digest(fmt::format("{}/{}", seed, stage));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write to '" + path.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace saber
