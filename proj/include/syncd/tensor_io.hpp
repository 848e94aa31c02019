#ifndef SYNCD_TENSOR_IO_HPP
#define SYNCD_TENSOR_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "syncd/tensor.hpp"

namespace syncd {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Container format: magic "SYCD", u8 version=1, u8 dtype=0 (f64), u32 rank,
// rank x u64 dims, then little-endian f64 payload.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// FNV-1a 64-bit over a file's bytes; manifest content addressing.
std::uint64_t hash_file(const std::filesystem::path& path);
std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hash_hex(std::uint64_t h);

}  // namespace syncd

#endif
