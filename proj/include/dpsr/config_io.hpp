#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "dpsr/training.hpp"

namespace dpsr {

// JSON form of TrainConfig. Every key is optional; absent keys take the
// values of the preset named by "preset" ("full" or "toy", default "full").
// mu may be the string "inf". Unknown keys are rejected.
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& json);

TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const std::filesystem::path& path, const TrainConfig& config);

nlohmann::json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& json);

std::string format_real(double value);  // %.17g, "inf", "-inf", "nan"
double parse_real(const std::string& text);

}  // namespace dpsr
