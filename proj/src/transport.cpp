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

#include "dcontrib/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>
#include <thread>

#include "dcontrib/util.hpp"

namespace dcontrib {

namespace {

constexpr std::size_t kMaxFrameBytes = 256u << 20;

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  if (left <= 0) return 0;
  return left > 1'000'000'000 ? 1'000'000'000 : static_cast<int>(left);
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

/// Reads up to and excluding '\n'. nullopt on timeout, EOF before newline, or error.
std::optional<std::string> read_line(int fd, Clock::time_point deadline) {
  std::string line;
  char buf[4096];
  for (;;) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) return std::nullopt;
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    for (ssize_t i = 0; i < n; ++i) {
      // Frames are one per connection, so bytes after the newline are not expected.
      if (buf[i] == '\n') return line;
      line.push_back(buf[i]);
    }
    if (line.size() > kMaxFrameBytes) return std::nullopt;
  }
}

sockaddr_in to_sockaddr(const SocketAddress& a) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(a.port);
  const std::string host = a.host == "localhost" ? "127.0.0.1" : a.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    fail(ErrorKind::kInvalidArgument, "not an IPv4 address: " + a.host);
  }
  return addr;
}

}  // namespace

void Transcript::record(const std::string& endpoint, bool to_actor, const std::string& frame) {
  std::lock_guard lock(mu_);
  frames_.push_back({endpoint, to_actor, frame});
}

std::vector<TranscriptFrame> Transcript::frames() const {
  std::lock_guard lock(mu_);
  return frames_;
}

InProcessEndpoint::InProcessEndpoint(ActorDataset actor, std::uint64_t base_seed, ParticipationPolicy policy)
    : actor_(std::move(actor)), base_seed_(base_seed), policy_(policy) {}

std::optional<Reply> InProcessEndpoint::exchange(const CallForUncertainty& call, Clock::time_point,
                                                 Transcript* transcript) {
  const std::string out = encode_message(call);
  if (transcript) transcript->record(name(), true, out);
  const auto received = std::get<CallForUncertainty>(decode_message(out));
  const std::string back = encode_reply(handle_call(actor_, received, base_seed_, policy_));
  if (transcript) transcript->record(name(), false, back);
  return decode_reply(back);
}

SocketAddress parse_address(const std::string& text) {
  const auto colon = text.rfind(':');
  require(colon != std::string::npos && colon > 0, "address must be host:port: " + text);
  SocketAddress a;
  a.host = text.substr(0, colon);
  if (a.host == "localhost") a.host = "127.0.0.1";
  double port = 0;
  require(parse_double(text.substr(colon + 1), port) && port >= 0 && port <= 65535 && port == static_cast<int>(port),
          "bad port in address: " + text);
  a.port = static_cast<std::uint16_t>(port);
  return a;
}

SocketEndpoint::SocketEndpoint(std::string name, SocketAddress address)
    : name_(std::move(name)), address_(std::move(address)) {}

std::optional<Reply> SocketEndpoint::exchange(const CallForUncertainty& call, Clock::time_point deadline,
                                              Transcript* transcript) {
  Fd sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (sock.get() < 0) return std::nullopt;
  const sockaddr_in addr = to_sockaddr(address_);
  if (::connect(sock.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) return std::nullopt;
  const std::string frame = encode_message(call);
  if (transcript) transcript->record(name_, true, frame);
  if (!send_all(sock.get(), frame + "\n")) return std::nullopt;
  auto line = read_line(sock.get(), deadline);
  if (!line) return std::nullopt;
  if (transcript) transcript->record(name_, false, *line);
  try {
    return decode_reply(*line);
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

ActorServer::ActorServer(const SocketAddress& listen) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) fail(ErrorKind::kIo, "socket() failed");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const sockaddr_in addr = to_sockaddr(listen);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 8) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fail(ErrorKind::kIo, "cannot listen on " + listen.host + ":" + std::to_string(listen.port) + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

ActorServer::~ActorServer() {
  if (fd_ >= 0) ::close(fd_);
}

void ActorServer::serve_one(const std::function<Reply(const CallForUncertainty&)>& handler) {
  int client = -1;
  do {
    client = ::accept(fd_, nullptr, nullptr);
  } while (client < 0 && errno == EINTR);
  if (client < 0) fail(ErrorKind::kIo, "accept() failed");
  Fd conn(client);
  auto line = read_line(conn.get(), Clock::now() + std::chrono::hours(24));
  if (!line) fail(ErrorKind::kProtocol, "connection closed before a complete frame");
  Message msg = decode_message(*line);
  auto* call = std::get_if<CallForUncertainty>(&msg);
  if (!call) throw DecodeError(DecodeFailure::kUnknownKind, "actor expected a call frame");
  const Reply reply = handler(*call);
  send_all(conn.get(), encode_reply(reply) + "\n");
}

ActorProcess::ActorProcess(const std::string& executable, const std::vector<std::string>& args,
                           std::chrono::milliseconds startup_timeout) {
  int pipefd[2];
  if (::pipe(pipefd) != 0) fail(ErrorKind::kIo, "pipe() failed");
  std::vector<std::string> argv_storage{executable};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    fail(ErrorKind::kIo, "fork() failed");
  }
  if (pid == 0) {
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    ::execv(executable.c_str(), argv.data());
    ::_exit(127);
  }
  pid_ = pid;
  ::close(pipefd[1]);
  Fd out(pipefd[0]);
  auto line = read_line(out.get(), Clock::now() + startup_timeout);
  constexpr std::string_view kPrefix = "LISTENING ";
  double port = 0;
  if (!line || line->rfind(kPrefix, 0) != 0 || !parse_double(line->substr(kPrefix.size()), port)) {
    ::kill(pid_, SIGKILL);
    wait();
    fail(ErrorKind::kCampaign, "actor process did not report a listening port: " + executable);
  }
  port_ = static_cast<std::uint16_t>(port);
}

int ActorProcess::wait() {
  if (!reaped_ && pid_ > 0) {
    while (::waitpid(pid_, &status_, 0) < 0 && errno == EINTR) {
    }
    reaped_ = true;
  }
  return status_;
}

ActorProcess::~ActorProcess() {
  if (reaped_ || pid_ <= 0) return;
  // Give a child that is still serving a little time, then stop it.
  for (int i = 0; i < 50; ++i) {
    if (::waitpid(pid_, &status_, WNOHANG) == pid_) {
      reaped_ = true;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ::kill(pid_, SIGKILL);
  wait();
}

CampaignResult run_campaign(const std::vector<ActorEndpoint*>& endpoints, const MetricSeries& metric,
                            const std::optional<MetricTransform>& transform, const EnsembleHyper& hyper,
                            const CampaignOptions& options) {
  require(!endpoints.empty(), "campaign needs at least one actor");
  Coordinator coordinator(options.campaign_name);
  const CallForUncertainty call = coordinator.issue_call(metric, transform, hyper, options.deadline);
  const Clock::time_point deadline = Clock::now() + options.deadline;

  Transcript transcript;
  std::vector<std::future<std::optional<Reply>>> pending;
  pending.reserve(endpoints.size());
  for (ActorEndpoint* ep : endpoints) {
    pending.push_back(std::async(std::launch::async, [ep, &call, deadline, &transcript] {
      try {
        return ep->exchange(call, deadline, &transcript);
      } catch (const Error&) {
        return std::optional<Reply>{};
      }
    }));
  }

  CampaignResult result;
  std::vector<UncertaintyResponse> responses;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    CampaignLogEntry entry{endpoints[i]->name(), ActorOutcome::kTimedOut};
    if (pending[i].wait_until(deadline) == std::future_status::ready) {
      if (auto reply = pending[i].get()) {
        if (auto* r = std::get_if<UncertaintyResponse>(&*reply); r && r->call_id == call.call_id) {
          responses.push_back(*r);
          entry.outcome = ActorOutcome::kResponded;
        } else {
          entry.outcome = ActorOutcome::kDeclined;
        }
      }
    }
    result.log.push_back(std::move(entry));
  }
  // Late in-process handlers cannot be cancelled; their futures join here.
  pending.clear();

  if (responses.empty()) fail(ErrorKind::kCampaign, "no actor returned an uncertainty value");
  const UncertaintyResponse noise = run_noise_baseline(call, options.noise_features, options.seed);
  result.ranking = rank_contributions(responses, noise, options.floor_slack);
  result.transcript = transcript.frames();
  return result;
}

std::string campaign_log_text(const CampaignResult& result) {
  std::string out = "call_id " + result.ranking.call_id + "\n";
  for (const auto& e : result.log) {
    const char* what = e.outcome == ActorOutcome::kResponded ? "responded"
                       : e.outcome == ActorOutcome::kDeclined ? "declined"
                                                               : "timeout";
    out += "actor " + e.actor_id + " " + what + "\n";
  }
  out += "noise_floor " + format_double(result.ranking.noise_floor) + "\n";
  return out;
}

}  // namespace dcontrib
