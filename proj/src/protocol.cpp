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

#include "dcontrib/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <unordered_set>

#include <json.hpp>

#include "dcontrib/ensemble.hpp"
#include "dcontrib/util.hpp"
#include "hyper_json.hpp"

namespace dcontrib {

using nlohmann::json;

void MetricTransform::validate() const {
  require(scale != 0.0 && std::isfinite(scale), "transform scale must be finite and non-zero");
  require(std::isfinite(offset), "transform offset must be finite");
}

MetricTransform MetricTransform::inverse() const {
  validate();
  return {1.0 / scale, -offset / scale};
}

MetricSeries apply_transform(const MetricSeries& series, const MetricTransform& t) {
  t.validate();
  std::vector<MetricEntry> out;
  out.reserve(series.size());
  for (const auto& e : series.entries()) out.push_back({e.part_id, t.scale * e.value + t.offset});
  return MetricSeries(std::move(out));
}

MetricTransform standardising_transform(const MetricSeries& series) {
  require(!series.empty(), "cannot standardise an empty series");
  const auto values = series.values();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size()));
  require(sd > 0.0, "cannot standardise a constant series");
  return {1.0 / sd, -mean / sd};
}

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw DecodeError(DecodeFailure::kSchema, what); }

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) schema_error(std::string("missing field: ") + name);
  return *it;
}

std::string string_field(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) schema_error(std::string("field is not a string: ") + name);
  return v.get<std::string>();
}

double number_field(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number()) schema_error(std::string("field is not a number: ") + name);
  return v.get<double>();
}

json envelope(const char* kind, const std::string& call_id) {
  return json{{"kind", kind}, {"schema_version", kSchemaVersion}, {"call_id", call_id}};
}

}  // namespace

std::string encode_message(const Message& message) {
  json j;
  if (const auto* call = std::get_if<CallForUncertainty>(&message)) {
    j = envelope("call", call->call_id);
    j["deadline_ms"] = call->response_deadline.count();
    j["hyper"] = detail::hyper_to_json(call->hyper);
    j["metric"] = {{"part_ids", call->metric.part_ids()}, {"values", call->metric.values()}};
  } else if (const auto* resp = std::get_if<UncertaintyResponse>(&message)) {
    j = envelope("response", resp->call_id);
    j["actor_id"] = resp->actor_id;
    j["total_uncertainty"] = resp->total_uncertainty;
  } else {
    const auto& dec = std::get<Decline>(message);
    j = envelope("decline", dec.call_id);
    j["actor_id"] = dec.actor_id;
  }
  return j.dump();
}

Message decode_message(std::string_view frame) {
  while (!frame.empty() && (frame.back() == '\n' || frame.back() == '\r')) frame.remove_suffix(1);
  if (frame.empty()) throw DecodeError(DecodeFailure::kFrame, "empty frame");
  json j = json::parse(frame.begin(), frame.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw DecodeError(DecodeFailure::kFrame, "truncated or malformed frame");
  if (!j.is_object()) throw DecodeError(DecodeFailure::kFrame, "frame is not an object");

  const json& version = field(j, "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    throw DecodeError(DecodeFailure::kSchemaVersion, "unsupported schema_version " + version.dump());
  }
  const std::string kind = string_field(j, "kind");
  const std::string call_id = string_field(j, "call_id");

  try {
    if (kind == "call") {
      CallForUncertainty call;
      call.call_id = call_id;
      call.response_deadline = std::chrono::milliseconds(field(j, "deadline_ms").get<std::int64_t>());
      call.hyper = detail::hyper_from_json(field(j, "hyper"), EnsembleHyper{}, /*strict=*/false);
      const json& metric = field(j, "metric");
      const auto ids = field(metric, "part_ids").get<std::vector<std::string>>();
      const auto values = field(metric, "values").get<std::vector<double>>();
      if (ids.size() != values.size()) schema_error("metric part_ids and values differ in length");
      std::vector<MetricEntry> entries;
      entries.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) entries.push_back({ids[i], values[i]});
      call.metric = MetricSeries(std::move(entries));
      return call;
    }
    if (kind == "response") {
      return UncertaintyResponse{string_field(j, "actor_id"), call_id, number_field(j, "total_uncertainty")};
    }
    if (kind == "decline") return Decline{string_field(j, "actor_id"), call_id};
  } catch (const json::exception& ex) {
    schema_error(std::string("bad field type: ") + ex.what());
  } catch (const DecodeError&) {
    throw;
  } catch (const Error& ex) {
    schema_error(ex.what());
  }
  throw DecodeError(DecodeFailure::kUnknownKind, "unknown message kind: " + kind);
}

std::string encode_reply(const Reply& reply) {
  return std::visit([](const auto& r) { return encode_message(Message(r)); }, reply);
}

Reply decode_reply(std::string_view frame) {
  Message m = decode_message(frame);
  if (auto* r = std::get_if<UncertaintyResponse>(&m)) return *r;
  if (auto* d = std::get_if<Decline>(&m)) return *d;
  throw DecodeError(DecodeFailure::kUnknownKind, "expected a response or decline frame");
}

CallForUncertainty Coordinator::issue_call(const MetricSeries& metric, const std::optional<MetricTransform>& transform,
                                           const EnsembleHyper& hyper, std::chrono::milliseconds deadline) {
  require(!metric.empty(), "cannot issue a call with an empty metric");
  hyper.validate();
  CallForUncertainty call;
  call.call_id = campaign_ + "-" + std::to_string(++counter_);
  call.metric = transform ? apply_transform(metric, *transform) : metric;
  call.hyper = hyper;
  call.response_deadline = deadline;
  issued_.push_back({call.call_id, transform});
  return call;
}

bool Coordinator::is_open(std::string_view call_id) const {
  return std::any_of(issued_.begin(), issued_.end(), [&](const Issued& i) { return i.call_id == call_id; });
}

std::optional<MetricTransform> Coordinator::transform_of(std::string_view call_id) const {
  for (const auto& i : issued_) {
    if (i.call_id == call_id) return i.transform;
  }
  return std::nullopt;
}

std::uint64_t actor_seed(std::uint64_t base_seed, std::string_view actor_id) { return mix_seed(base_seed, actor_id); }

Reply handle_call(const ActorDataset& actor, const CallForUncertainty& call, std::uint64_t base_seed,
                  const ParticipationPolicy& policy, std::string* local_diagnostic) {
  const Decline decline{actor.actor_id, call.call_id};
  auto note = [&](const std::string& why) {
    if (local_diagnostic) *local_diagnostic = why;
  };
  if (policy.decline) {
    note("configured to decline");
    return decline;
  }
  std::unordered_set<std::string> wanted;
  for (const auto& e : call.metric.entries()) wanted.insert(e.part_id);
  std::size_t overlap = 0;
  for (const auto& id : actor.part_ids) overlap += wanted.count(id);
  if (overlap == 0 || overlap < policy.min_overlap) {
    note("join overlap " + std::to_string(overlap) + " below minimum " + std::to_string(policy.min_overlap));
    return decline;
  }
  try {
    const Ensemble ensemble = train_ensemble(actor, call.metric, call.hyper, actor_seed(base_seed, actor.actor_id));
    const double u = total_uncertainty(ensemble, actor);
    if (!std::isfinite(u) || u < 0.0) {
      note("total uncertainty is not a finite non-negative number");
      return decline;
    }
    note("");
    return UncertaintyResponse{actor.actor_id, call.call_id, u};
  } catch (const Error& ex) {
    note(ex.what());
    return decline;
  }
}

UncertaintyResponse run_noise_baseline(const CallForUncertainty& call, std::size_t feature_count,
                                       std::uint64_t seed) {
  const auto ids = call.metric.part_ids();
  const ActorDataset noise = make_noise_actor(ids.size(), feature_count, ids, mix_seed(seed, "noise-features"));
  std::string why;
  Reply reply = handle_call(noise, call, seed, ParticipationPolicy{0, false}, &why);
  if (auto* r = std::get_if<UncertaintyResponse>(&reply)) return *r;
  fail(ErrorKind::kCampaign, "noise baseline failed: " + why);
}

ContributionRanking rank_contributions(const std::vector<UncertaintyResponse>& responses,
                                       const UncertaintyResponse& noise, double floor_slack) {
  require(!responses.empty(), "ranking needs at least one actor response");
  require(floor_slack > 0.0, "floor slack must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& r : responses) {
    if (r.call_id != noise.call_id) {
      fail(ErrorKind::kInvalidArgument, "responses belong to different calls: " + r.call_id + " vs " + noise.call_id);
    }
    require(r.actor_id != kNoiseActorId, "actor id is reserved for the noise baseline");
    require(seen.insert(r.actor_id).second, "duplicate response from " + r.actor_id);
  }
  ContributionRanking ranking;
  ranking.call_id = noise.call_id;
  ranking.noise_floor = noise.total_uncertainty;
  const double threshold = floor_slack * noise.total_uncertainty;
  for (const auto& r : responses) {
    ranking.entries.push_back({r.actor_id, r.total_uncertainty, 0, false, r.total_uncertainty >= threshold});
  }
  ranking.entries.push_back({noise.actor_id, noise.total_uncertainty, 0, true, false});
  std::sort(ranking.entries.begin(), ranking.entries.end(), [](const RankingEntry& a, const RankingEntry& b) {
    if (a.total_uncertainty != b.total_uncertainty) return a.total_uncertainty < b.total_uncertainty;
    return a.actor_id < b.actor_id;
  });
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) ranking.entries[i].rank = static_cast<int>(i + 1);
  return ranking;
}

std::string ranking_to_csv(const ContributionRanking& ranking) {
  std::string out = "rank,actor_id,total_uncertainty,noise_baseline,below_floor\n";
  for (const auto& e : ranking.entries) {
    out += std::to_string(e.rank) + ',' + csv_escape(e.actor_id) + ',' + format_double(e.total_uncertainty) + ',' +
           (e.is_noise ? "1" : "0") + ',' + (e.below_floor ? "1" : "0") + '\n';
  }
  return out;
}

ContributionRanking load_ranking_csv(const std::filesystem::path& path) {
  RawTable t = load_csv(path, "actor_id");
  auto rank = t.column_index("rank");
  auto unc = t.column_index("total_uncertainty");
  auto noise = t.column_index("noise_baseline");
  auto below = t.column_index("below_floor");
  if (!rank || !unc || !noise || !below) fail(ErrorKind::kParse, "not a ranking csv: " + path.string());
  ContributionRanking ranking;
  bool have_noise = false;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    RankingEntry e;
    e.actor_id = t.ids[r];
    e.rank = static_cast<int>(t.values(row, static_cast<Eigen::Index>(*rank)));
    e.total_uncertainty = t.values(row, static_cast<Eigen::Index>(*unc));
    e.is_noise = t.values(row, static_cast<Eigen::Index>(*noise)) != 0.0;
    e.below_floor = t.values(row, static_cast<Eigen::Index>(*below)) != 0.0;
    if (e.is_noise) {
      ranking.noise_floor = e.total_uncertainty;
      have_noise = true;
    }
    ranking.entries.push_back(std::move(e));
  }
  if (!have_noise) fail(ErrorKind::kParse, "ranking csv has no noise baseline row: " + path.string());
  return ranking;
}

}  // namespace dcontrib
