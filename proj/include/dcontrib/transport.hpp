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

// Transports carrying protocol frames between the coordinator and actors, and
// the end-to-end campaign driver.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dcontrib/protocol.hpp"

namespace dcontrib {

using Clock = std::chrono::steady_clock;

struct TranscriptFrame {
  std::string endpoint;
  bool to_actor = false;  // false: actor -> coordinator
  std::string frame;
};

/// Thread-safe capture of every frame a campaign exchanges.
class Transcript {
 public:
  void record(const std::string& endpoint, bool to_actor, const std::string& frame);
  std::vector<TranscriptFrame> frames() const;

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptFrame> frames_;
};

class ActorEndpoint {
 public:
  virtual ~ActorEndpoint() = default;
  virtual const std::string& name() const = 0;
  /// Sends the call and waits for one reply. nullopt on timeout or a broken link.
  virtual std::optional<Reply> exchange(const CallForUncertainty& call, Clock::time_point deadline,
                                        Transcript* transcript) = 0;
};

/// Runs handle_call in the coordinator's process, passing frames through the codec.
class InProcessEndpoint : public ActorEndpoint {
 public:
  InProcessEndpoint(ActorDataset actor, std::uint64_t base_seed, ParticipationPolicy policy = {});
  const std::string& name() const override { return actor_.actor_id; }
  std::optional<Reply> exchange(const CallForUncertainty& call, Clock::time_point deadline,
                                Transcript* transcript) override;

 private:
  ActorDataset actor_;
  std::uint64_t base_seed_;
  ParticipationPolicy policy_;
};

struct SocketAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Parses "host:port"; "localhost" maps to 127.0.0.1.
SocketAddress parse_address(const std::string& text);

/// Newline-framed TCP client for one actor.
class SocketEndpoint : public ActorEndpoint {
 public:
  SocketEndpoint(std::string name, SocketAddress address);
  const std::string& name() const override { return name_; }
  std::optional<Reply> exchange(const CallForUncertainty& call, Clock::time_point deadline,
                                Transcript* transcript) override;

 private:
  std::string name_;
  SocketAddress address_;
};

/// Listening socket on the actor side. Each accepted connection carries one call.
class ActorServer {
 public:
  explicit ActorServer(const SocketAddress& listen);
  ~ActorServer();
  ActorServer(const ActorServer&) = delete;
  ActorServer& operator=(const ActorServer&) = delete;

  std::uint16_t port() const { return port_; }

  /// Accepts one connection, reads one call frame, writes the handler's reply.
  void serve_one(const std::function<Reply(const CallForUncertainty&)>& handler);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// A child process running an actor server. The child prints "LISTENING <port>"
/// as its first stdout line.
class ActorProcess {
 public:
  ActorProcess(const std::string& executable, const std::vector<std::string>& args,
               std::chrono::milliseconds startup_timeout = std::chrono::seconds(30));
  ~ActorProcess();
  ActorProcess(const ActorProcess&) = delete;
  ActorProcess& operator=(const ActorProcess&) = delete;

  std::uint16_t port() const { return port_; }
  /// Waits for the child to exit; returns its exit status.
  int wait();

 private:
  int pid_ = -1;
  std::uint16_t port_ = 0;
  bool reaped_ = false;
  int status_ = 0;
};

struct CampaignOptions {
  std::uint64_t seed = 0;
  std::size_t noise_features = 5;
  double floor_slack = 1.0;
  std::chrono::milliseconds deadline = std::chrono::hours(1);
  std::string campaign_name = "campaign";
};

enum class ActorOutcome { kResponded, kDeclined, kTimedOut };

struct CampaignLogEntry {
  std::string actor_id;
  ActorOutcome outcome = ActorOutcome::kResponded;
};

struct CampaignResult {
  ContributionRanking ranking;
  std::vector<CampaignLogEntry> log;  // endpoint order
  std::vector<TranscriptFrame> transcript;
};

/// Issues one call to every endpoint concurrently, treats missing replies at the
/// deadline as declines, runs the noise baseline and ranks.
CampaignResult run_campaign(const std::vector<ActorEndpoint*>& endpoints, const MetricSeries& metric,
                            const std::optional<MetricTransform>& transform, const EnsembleHyper& hyper,
                            const CampaignOptions& options);

std::string campaign_log_text(const CampaignResult& result);

}  // namespace dcontrib
