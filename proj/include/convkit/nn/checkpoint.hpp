#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "convkit/nn/tensor.hpp"

namespace convkit::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian binary: magic "CKPT", version, parameter count, then per
// parameter its name and shape, then the float64 payload and an FNV-1a
// checksum of the payload.
std::string save_params(const ParamStore& store);
ParamStore load_params(std::string_view bytes);
// Loads values into an existing store whose names and shapes must match.
void load_params_into(ParamStore& store, std::string_view bytes);

nlohmann::json params_to_json(const ParamStore& store);

}  // namespace convkit::nn
