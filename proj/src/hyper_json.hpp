// Copyright 2026 The dcontrib Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>

#include <json.hpp>

#include "dcontrib/error.hpp"
#include "dcontrib/network.hpp"

namespace dcontrib::detail {

inline nlohmann::json hyper_to_json(const EnsembleHyper& h) {
  return nlohmann::json{{"member_count", h.member_count},
                        {"hidden_size", h.hidden_size},
                        {"activation", "relu"},
                        {"dropout_rate", h.dropout_rate},
                        {"batch_size", h.batch_size},
                        {"patience_epochs", h.patience_epochs},
                        {"max_epochs", h.max_epochs},
                        {"learning_rate", h.learning_rate},
                        {"validation_fraction", h.validation_fraction},
                        {"log_variance_clamp", {h.log_variance_min, h.log_variance_max}}};
}

/// Overlays the keys present in `j` onto `base`. With `strict`, unknown keys are rejected.
inline EnsembleHyper hyper_from_json(const nlohmann::json& j, EnsembleHyper base, bool strict) {
  if (!j.is_object()) fail(ErrorKind::kInvalidArgument, "hyper must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "member_count") base.member_count = v.get<int>();
    else if (key == "hidden_size") base.hidden_size = v.get<int>();
    else if (key == "activation") {
      if (v.get<std::string>() != "relu") fail(ErrorKind::kInvalidArgument, "only relu activation is supported");
    } else if (key == "dropout_rate") base.dropout_rate = v.get<double>();
    else if (key == "batch_size") base.batch_size = v.get<int>();
    else if (key == "patience_epochs") base.patience_epochs = v.get<int>();
    else if (key == "max_epochs") base.max_epochs = v.get<int>();
    else if (key == "learning_rate") base.learning_rate = v.get<double>();
    else if (key == "validation_fraction") base.validation_fraction = v.get<double>();
    else if (key == "log_variance_clamp") {
      base.log_variance_min = v.at(0).get<double>();
      base.log_variance_max = v.at(1).get<double>();
    } else if (strict) {
      fail(ErrorKind::kInvalidArgument, "unknown hyper key: " + key);
    }
  }
  return base;
}

}  // namespace dcontrib::detail
