// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reobj/convblock.hpp"

namespace reobj::tripletnet {

// RMDL model file: "RMDL", u8 version=1, u16 tensor count, then per tensor
// u8 name length + UTF-8 name, u8 ndim, ndim x u32 shape, f32 little-endian payload.
// Holds every ConvBlock tensor plus 1-element "c_in" and "embed_dim" tensors and,
// optionally, a 32-element "config_digest" tensor carrying SHA-256 bytes.

struct ModelFile {
    ConvBlockParams<float> params;
    std::string config_digest;  // lowercase hex, empty if absent
};

std::vector<unsigned char> encode_model(const ConvBlockParams<float>& params, const std::string& config_digest = {});
ModelFile decode_model(std::span<const unsigned char> bytes, const std::string& origin = "<memory>");

void write_model(const std::filesystem::path& path, const ConvBlockParams<float>& params,
                 const std::string& config_digest = {});
ModelFile read_model(const std::filesystem::path& path);

}  // namespace reobj::tripletnet
