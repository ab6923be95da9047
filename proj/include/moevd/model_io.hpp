#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "moevd/features.hpp"
#include "moevd/learn.hpp"

namespace moevd::learn {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// float32 little-endian packing used by model files.
std::string pack_floats(const std::vector<double>& values);
std::vector<double> unpack_floats(std::string_view bytes);

/// A model plus the metadata recorded alongside it.
struct ModelFile {
    static constexpr int kVersion = 1;

    Model model;
    LossSpec loss;
    TrainConfig train;
    std::optional<features::EncoderConfig> encoder;
};

std::string to_json(const ModelFile& file);
ModelFile model_file_from_json(std::string_view text);

nlohmann::ordered_json encoder_to_json(const features::EncoderConfig& cfg);
features::EncoderConfig encoder_from_json(const nlohmann::json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
/// Keys missing from `j` keep their value from `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::ordered_json loss_spec_to_json(const LossSpec& spec);
LossSpec loss_spec_from_json(const nlohmann::json& j);

}  // namespace moevd::learn
