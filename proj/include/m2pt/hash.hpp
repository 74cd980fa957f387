#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "m2pt/tensor.hpp"

namespace m2pt {

/// Incremental SHA-256, hex digest.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  std::string hex_digest();

 private:
  void* ctx_;
};

template <typename T>
std::string tensor_sha256(const Tensor<T>& t) {
  Sha256 h;
  for (std::size_t d : t.shape()) {
    const auto v = static_cast<std::uint64_t>(d);
    h.update(&v, sizeof v);
  }
  h.update(t.data(), t.size() * sizeof(T));
  return h.hex_digest();
}

}  // namespace m2pt
