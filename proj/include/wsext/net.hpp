#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "wsext/channel.hpp"
#include "wsext/crypto.hpp"
#include "wsext/error.hpp"
#include "wsext/protocol.hpp"

namespace wsext {

// ---- SOAP faults ----

/// SOAP 1.2 fault whose subcode is the error name ("CheckFailed").
std::string soap_fault(Errc code, std::string_view detail);
/// The error a fault document carries, or nullopt if `xml` is not a fault.
std::optional<Error> parse_soap_fault(std::string_view xml);

// ---- In-process channel ----

/// Both ends in one process; every role runs locally.
class LoopbackChannel : public Channel {
 public:
  ChannelKind kind() const noexcept override { return ChannelKind::loopback; }
  bool remote_roles() const noexcept override { return false; }
  void send(const Frame& frame) override;
  Frame receive(std::chrono::milliseconds timeout) override;
  void close() override;

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> queue_;
  bool closed_ = false;
};

// ---- Responder side ----

/// Runs every role except the initiator for any number of sessions.
class ResponderHost {
 public:
  struct Reply {
    /// Empty when no step is addressed to the initiator next.
    std::string envelope;
    std::vector<StepTiming> timings;
    std::map<std::string, std::map<std::string, std::string>> goals;
  };

  explicit ResponderHost(const CryptoProvider& crypto, EngineOptions options = {});

  /// Processes the initiator's message and builds the hosted replies.
  /// On failure the session is dropped and the error is rethrown.
  Reply handle(const Frame& frame);
  /// World JSON for a protocol; generated on first use.
  std::string provision(const std::string& protocol);
  std::size_t open_sessions() const;

 private:
  struct Session {
    const ProtocolSpec* spec;
    std::map<std::string, RoleState> roles;
    std::size_t next = 0;
    std::mutex mu;
  };

  const World& world(const ProtocolSpec& spec);

  const CryptoProvider& crypto_;
  EngineOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, World> worlds_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Reply wire encodings shared by both transports.
std::string encode_timings(const std::vector<StepTiming>& timings);
std::vector<StepTiming> decode_timings(std::string_view text);
std::string encode_goals(const std::map<std::string, std::map<std::string, std::string>>& goals);
std::map<std::string, std::map<std::string, std::string>> decode_goals(std::string_view text);

// ---- Servers ----

class Server {
 public:
  virtual ~Server() = default;
  /// Port actually bound (useful after binding port 0).
  virtual int port() const noexcept = 0;
  virtual void stop() = 0;
};

/// POST / with application/soap+xml; GET /provision/<protocol>.
/// Throws BindError.
std::unique_ptr<Server> start_http_server(ResponderHost& host, const std::string& address, int port);
/// Length-prefixed frames over a stream socket. Throws BindError.
std::unique_ptr<Server> start_tcp_server(ResponderHost& host, const std::string& address, int port);

// ---- Client channels ----

struct Endpoint {
  std::string host;
  int port = 0;

  /// "host:port". Throws InvalidConfig.
  static Endpoint parse(std::string_view text);
};

/// Request/response client: each send carries one envelope and queues the
/// hosted roles' reply for receive().
class RemoteChannel : public Channel {
 public:
  bool remote_roles() const noexcept override { return true; }
  void send(const Frame& frame) override;
  Frame receive(std::chrono::milliseconds timeout) override;
  void close() override { closed_ = true; }
  RemoteReport drain_remote() override;

 protected:
  struct Response {
    int status = 200;
    std::string envelope;
    std::string timings;
    std::string goals;
  };
  virtual Response exchange(const Frame& frame) = 0;

 private:
  std::deque<Frame> inbox_;
  RemoteReport report_;
  bool closed_ = false;
};

class HttpChannel : public RemoteChannel {
 public:
  explicit HttpChannel(Endpoint endpoint);
  ~HttpChannel() override;
  ChannelKind kind() const noexcept override { return ChannelKind::http_post; }
  std::optional<std::string> provision(const std::string& protocol) override;

 protected:
  Response exchange(const Frame& frame) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class TcpChannel : public RemoteChannel {
 public:
  explicit TcpChannel(Endpoint endpoint);
  ~TcpChannel() override;
  ChannelKind kind() const noexcept override { return ChannelKind::tcp; }
  std::optional<std::string> provision(const std::string& protocol) override;

 protected:
  Response exchange(const Frame& frame) override;

 private:
  std::vector<std::string> call(const std::vector<std::string>& fields);
  Endpoint endpoint_;
  int fd_ = -1;
};

/// Channel of the given kind; loopback ignores the endpoint.
std::unique_ptr<Channel> make_channel(ChannelKind kind, const std::optional<Endpoint>& endpoint);

}  // namespace wsext
