#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wsext {

enum class ChannelKind { loopback, tcp, http_post };

std::string_view to_string(ChannelKind k) noexcept;
std::optional<ChannelKind> channel_kind_from_string(std::string_view s) noexcept;

/// One envelope in flight. Session correlation travels beside the envelope,
/// never inside it.
struct Frame {
  std::string protocol;
  std::string session;
  std::string envelope;
};

/// Construction or processing time of one step by one role.
struct StepTiming {
  std::string role;
  int step = 0;
  bool construction = true;
  std::int64_t nanoseconds = 0;
};

/// What roles behind a channel reported: their step timings and, per role,
/// goal identifier -> digest of the bound value.
struct RemoteReport {
  std::vector<StepTiming> timings;
  std::map<std::string, std::map<std::string, std::string>> goals;
};

struct ChannelCounters {
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  /// Wall time of the most recent send (for request/response transports this
  /// includes the remote turn).
  std::chrono::nanoseconds last_send_latency{0};
};

class Channel {
 public:
  virtual ~Channel() = default;

  virtual ChannelKind kind() const noexcept = 0;
  /// True when every role except the initiator runs on the far side.
  virtual bool remote_roles() const noexcept = 0;

  /// Throws ChannelClosed, TransportError, or the error a remote fault names.
  virtual void send(const Frame& frame) = 0;
  /// Throws Timeout, ChannelClosed.
  virtual Frame receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;

  /// Long-term material for `protocol` as JSON, when the far side owns it.
  virtual std::optional<std::string> provision(const std::string& protocol) {
    (void)protocol;
    return std::nullopt;
  }
  /// Reports collected since the last call.
  virtual RemoteReport drain_remote() { return {}; }

  const ChannelCounters& counters() const noexcept { return counters_; }

 protected:
  ChannelCounters counters_;
};

}  // namespace wsext
