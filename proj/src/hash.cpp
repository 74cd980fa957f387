#include "m2pt/hash.hpp"

#include <openssl/evp.h>

#include <cstdio>

namespace m2pt {

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr);
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void Sha256::update(const void* data, std::size_t len) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, len);
}

std::string Sha256::hex_digest() {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), digest, &len);
  std::string out(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(out.data() + 2 * i, 3, "%02x", digest[i]);
  }
  return out;
}

}  // namespace m2pt
