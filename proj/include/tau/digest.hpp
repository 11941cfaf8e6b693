#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tau {

// Incremental SHA-256, hex-encoded. Backed by OpenSSL's EVP interface.
class Sha256 {
  public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }
    std::string hex();  // finalizes; further updates are invalid

  private:
    void* ctx_;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

template <typename T>
std::string sha256_hex_of(const std::vector<T>& v) {
    return sha256_hex(v.data(), v.size() * sizeof(T));
}

}  // namespace tau
