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

// Coordinator/actor message flow: the call for uncertainty, the actor's single
// scalar reply (or decline), the noise baseline and the contribution ranking.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dcontrib/dataset.hpp"
#include "dcontrib/error.hpp"
#include "dcontrib/network.hpp"

namespace dcontrib {

inline constexpr int kSchemaVersion = 1;

/// value' = scale * value + offset.
struct MetricTransform {
  double scale = 1.0;
  double offset = 0.0;

  void validate() const;
  MetricTransform inverse() const;
};

MetricSeries apply_transform(const MetricSeries& series, const MetricTransform& t);

/// Transform mapping the series to mean 0, standard deviation 1.
MetricTransform standardising_transform(const MetricSeries& series);

struct CallForUncertainty {
  std::string call_id;
  MetricSeries metric;
  EnsembleHyper hyper;
  std::chrono::milliseconds response_deadline{0};
  bool operator==(const CallForUncertainty&) const = default;
};

struct UncertaintyResponse {
  std::string actor_id;
  std::string call_id;
  double total_uncertainty = 0.0;
  bool operator==(const UncertaintyResponse&) const = default;
};

struct Decline {
  std::string actor_id;
  std::string call_id;
  bool operator==(const Decline&) const = default;
};

using Message = std::variant<CallForUncertainty, UncertaintyResponse, Decline>;
using Reply = std::variant<UncertaintyResponse, Decline>;

enum class DecodeFailure { kFrame, kUnknownKind, kSchemaVersion, kSchema };

class DecodeError : public Error {
 public:
  DecodeError(DecodeFailure failure, const std::string& message)
      : Error(ErrorKind::kProtocol, message), failure_(failure) {}
  DecodeFailure failure() const noexcept { return failure_; }

 private:
  DecodeFailure failure_;
};

/// One JSON object on a single line, no trailing newline.
std::string encode_message(const Message& message);
Message decode_message(std::string_view frame);

std::string encode_reply(const Reply& reply);
Reply decode_reply(std::string_view frame);

/// Issues calls with unique ids and remembers each call's private transform.
class Coordinator {
 public:
  explicit Coordinator(std::string campaign = "campaign") : campaign_(std::move(campaign)) {}

  CallForUncertainty issue_call(const MetricSeries& metric, const std::optional<MetricTransform>& transform,
                                const EnsembleHyper& hyper, std::chrono::milliseconds deadline);

  bool is_open(std::string_view call_id) const;
  std::optional<MetricTransform> transform_of(std::string_view call_id) const;

 private:
  struct Issued {
    std::string call_id;
    std::optional<MetricTransform> transform;
  };
  std::string campaign_;
  std::uint64_t counter_ = 0;
  std::vector<Issued> issued_;
};

struct ParticipationPolicy {
  std::size_t min_overlap = 50;
  bool decline = false;
};

/// Actor-side handler: joins local rows to the call, trains the ensemble and
/// reports one scalar. Any failure becomes a Decline; diagnostics stay local
/// and are only written to `local_diagnostic` when given.
Reply handle_call(const ActorDataset& actor, const CallForUncertainty& call, std::uint64_t base_seed,
                  const ParticipationPolicy& policy = {}, std::string* local_diagnostic = nullptr);

/// Seed used by an actor for its ensemble: derived from the base seed and its id.
std::uint64_t actor_seed(std::uint64_t base_seed, std::string_view actor_id);

/// Same pipeline as handle_call on standard-normal features for the call's part ids.
UncertaintyResponse run_noise_baseline(const CallForUncertainty& call, std::size_t feature_count,
                                       std::uint64_t seed);

struct RankingEntry {
  std::string actor_id;
  double total_uncertainty = 0.0;
  int rank = 0;  // 1 = lowest uncertainty
  bool is_noise = false;
  bool below_floor = false;  // uncertainty >= slack * noise floor: no significant contribution
  bool operator==(const RankingEntry&) const = default;
};

struct ContributionRanking {
  std::string call_id;
  std::vector<RankingEntry> entries;  // ascending uncertainty, noise included
  double noise_floor = 0.0;
  bool operator==(const ContributionRanking&) const = default;
};

ContributionRanking rank_contributions(const std::vector<UncertaintyResponse>& responses,
                                       const UncertaintyResponse& noise, double floor_slack = 1.0);

std::string ranking_to_csv(const ContributionRanking& ranking);
ContributionRanking load_ranking_csv(const std::filesystem::path& path);

}  // namespace dcontrib
