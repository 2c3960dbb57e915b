#pragma once

#include <json.hpp>

#include "mer/loss.hpp"
#include "mer/network.hpp"

namespace mer {

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

nlohmann::json weights_to_json(const LossWeights& w);
LossWeights weights_from_json(const nlohmann::json& j);

}  // namespace mer
