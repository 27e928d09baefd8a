#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace webstar {

// splitmix64 finaliser; combines seeds into independent streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(std::string_view s);

// Seeded generator whose outputs are identical across standard libraries:
// mt19937_64 is fully specified, and the derived draws below avoid the
// implementation-defined std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard Gumbel(0, 1) draw.
  double gumbel();

 private:
  std::mt19937_64 engine_;
};

// Runs body(i) for i in [0, n) on up to `parallelism` threads. The body must
// write results into per-index slots; exceptions escaping body terminate.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& body);

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string base64_encode(std::span<const std::uint8_t> data);

std::string read_file(const std::string& path);
// Creates missing parent directories of `path`.
void ensure_parent_dir(const std::filesystem::path& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace webstar
