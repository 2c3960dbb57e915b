#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mer {

// Contract violations (bad arguments, shape mismatches) throw invalid_argument;
// I/O and environment failures throw runtime_error. The CLI turns both into a
// message on stderr and a non-zero exit.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Deterministic RNG used everywhere training touches randomness. mt19937 has a
// bit-exact sequence by the standard; the derived draws below avoid the
// implementation-defined std:: distributions so a seed reproduces the same run
// on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(static_cast<uint32_t>(seed)) {}

  uint32_t next_u32() { return engine_(); }

  // Uniform integer in [0, n). n == 0 returns 0.
  uint32_t next_below(uint32_t n) {
    if (n <= 1) return 0;
    // modulo bias is < 2^-32 * n; irrelevant for crop offsets and shuffles
    return engine_() % n;
  }

  // Uniform in [0, 1).
  double next_unit() { return engine_() * (1.0 / 4294967296.0); }

  // Standard normal via Box-Muller (spare value cached).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = (static_cast<double>(engine_()) + 1.0) * (1.0 / 4294967296.0);
    double u2 = static_cast<double>(engine_()) * (1.0 / 4294967296.0);
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_below(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> engine_ >> spare_flag >> spare_;
    has_spare_ = spare_flag != 0;
    if (!is) throw std::runtime_error("corrupt RNG state");
  }

 private:
  std::mt19937 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for dataset fingerprints in the run manifest.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace mer
