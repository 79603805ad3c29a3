#pragma once

#include <string>
#include <vector>

#include "spencer/encoder.hpp"

namespace spencer {

// Checkpoint layout: magic "SPNC", version u32, header {V u32, d u32, h u32,
// L u32, dropout f64, score-head flag u8}, parameter tensors in declaration
// order as {rank u32, dims u32 x rank, f64 data}, then CRC32 of everything
// before it. Round-trips are bitwise exact.
void save_model(const EncoderModel& model, const std::string& path);
EncoderModel load_model(const std::string& path);

std::vector<uint8_t> serialize_model(const EncoderModel& model);

// CRC32 of the serialized model; used as the index build fingerprint.
uint32_t model_fingerprint(const EncoderModel& model);

}  // namespace spencer
