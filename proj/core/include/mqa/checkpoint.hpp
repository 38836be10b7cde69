#pragma once

#include <filesystem>

#include "mqa/model.hpp"

namespace mqa {

// Binary model container, magic "MQAC", format version 1: a header carrying
// variant, state source, dimensions and seed, then every parameter tensor as
// little-endian 64-bit reals in declaration order. Round trips byte-exactly.
void save_checkpoint(const MQAModel& model, const std::filesystem::path& path);
MQAModel load_checkpoint(const std::filesystem::path& path);

// Companion config document, one `key = value` per line, `#` comments.
void save_config_text(const MQAConfig& config, const std::filesystem::path& path);
MQAConfig load_config_text(const std::filesystem::path& path);

}  // namespace mqa
