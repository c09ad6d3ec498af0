#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bl {

// Error taxonomy shared by the C++ core and the C API. Every failure that
// crosses the library boundary carries one of these codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kParse = 2,
  kValidation = 3,
  kConfig = 4,
  kIo = 5,
  kCheckpointNotFound = 6,
  kSchema = 7,
  kInsufficientContent = 8,
  kInternal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

const char* error_code_name(ErrorCode code);

// Deterministic 64-bit RNG. All stochastic behavior in the library flows
// from explicit seeds so that equal seeds give equal outputs.
using Rng = std::mt19937_64;

// FNV-1a, used for vocabulary hashing and for deriving per-item seeds.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = fnv1a64(tag);
  h ^= base + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= index * 0xbf58476d1ce4e5b9ull;
  // final avalanche (splitmix64 tail)
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes via a temp file in the same directory followed by a rename, so a
// crashed run never leaves a partially written output in place.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

std::string lowercase_ascii(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::string join(const std::vector<std::string>& parts,
                 std::string_view sep = " ");

}  // namespace bl
