// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ether/tensor.hpp"

namespace ether {

// Binary tensor container, bit-exact and independent of host endianness:
//   magic "ETCK" | u32 version (= 1) | u32 tensor count
//   per tensor: u16 name length | UTF-8 name | u8 dtype (0 = float64)
//               | u8 rank | rank x u64 dims | row-major float64 payload
// All integers and payload words are little-endian. Round-trips are
// byte-identical; malformed input raises FormatError with the byte offset.
void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors);

std::map<std::string, Tensor> load_checkpoint(const std::string& path);

std::vector<unsigned char> encode_checkpoint(const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> decode_checkpoint(const std::vector<unsigned char>& bytes);

} // namespace ether
