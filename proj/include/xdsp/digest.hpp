#ifndef XDSP_DIGEST_HPP
#define XDSP_DIGEST_HPP

#include <cstdint>
#include <string>

namespace xdsp::digest {

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace xdsp::digest

#endif
