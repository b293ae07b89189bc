#include "mmict/digest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <memory>

#include "mmict/errors.hpp"

namespace mmict {
namespace {

struct Sha256 {
  Sha256() : ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  void update(const void* data, std::size_t n) {
    if (n && EVP_DigestUpdate(ctx.get(), data, n) != 1) throw Error("sha256: update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256: final failed");
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", md[i]);
      out += buf;
    }
    return out;
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string parameter_digest(std::span<Parameter* const> params) {
  Sha256 h;
  for (const Parameter* p : params) {
    h.update(p->name.data(), p->name.size() + 1);
    for (std::size_t dim : p->value.shape()) h.update(&dim, sizeof dim);
    h.update(p->value.data(), p->value.size() * sizeof(double));
  }
  return h.hex();
}

}  // namespace mmict
