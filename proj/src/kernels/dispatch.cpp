#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mer/kernels.hpp"

namespace mer::kernels {

const KernelTable& scalar_table();
const KernelTable& avx2_table();
const KernelTable& avx512_table();

bool variant_available(Variant v) {
  switch (v) {
    case Variant::scalar: return true;
    case Variant::avx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Variant::avx512:
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw");
  }
  return false;
}

const KernelTable& table(Variant v) {
  switch (v) {
    case Variant::avx512: return avx512_table();
    case Variant::avx2: return avx2_table();
    default: return scalar_table();
  }
}

namespace {

Variant choose() {
  if (const char* env = std::getenv("MER_KERNELS")) {
    std::string want(env);
    Variant v;
    if (want == "scalar") v = Variant::scalar;
    else if (want == "avx2") v = Variant::avx2;
    else if (want == "avx512") v = Variant::avx512;
    else throw std::runtime_error("MER_KERNELS: unknown variant '" + want + "'");
    if (!variant_available(v))
      throw std::runtime_error("MER_KERNELS: variant '" + want + "' not supported by this CPU");
    return v;
  }
  if (variant_available(Variant::avx512)) return Variant::avx512;
  if (variant_available(Variant::avx2)) return Variant::avx2;
  return Variant::scalar;
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& t = table(choose());
  return t;
}

std::string active_name() { return active().name; }

}  // namespace mer::kernels
