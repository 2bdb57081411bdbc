#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wsext/channel.hpp"
#include "wsext/crypto.hpp"
#include "wsext/net.hpp"
#include "wsext/protocol.hpp"

namespace wsext {

enum class OutputFormat { table, csv, json };

std::string_view to_string(OutputFormat f) noexcept;
std::optional<OutputFormat> output_format_from_string(std::string_view s) noexcept;

struct MicroConfig {
  int iterations = 100;
  int warmup = 10;
  std::vector<std::size_t> sizes{256, 1024, 4096, 16384};

  /// Throws InvalidConfig.
  void validate() const;
};

/// Median and interquartile range of one cell, in nanoseconds.
struct Sample {
  std::int64_t median_ns = 0;
  std::int64_t q1_ns = 0;
  std::int64_t q3_ns = 0;

  static Sample of(std::vector<std::int64_t> ns);
};

/// Construct + encrypt + serialize of M, {M}sk(Kab) and {M}pk(PKb) at one size.
struct MicroRow {
  std::size_t size = 0;
  Sample plain;
  Sample sk;
  Sample pk;
  std::size_t plain_octets = 0;
  std::size_t sk_octets = 0;
  std::size_t pk_octets = 0;
};

struct MicroReport {
  std::string suite;
  int iterations = 0;
  std::vector<MicroRow> rows;

  std::string render(OutputFormat format) const;
};

/// Throws InvalidConfig before measuring anything.
MicroReport bench_micro(const MicroConfig& config, const CryptoProvider& crypto);

struct ProtocolBenchConfig {
  std::string protocol;
  int iterations = 100;
  int warmup = 10;
  ChannelKind transport = ChannelKind::loopback;
  std::optional<Endpoint> endpoint;
  EngineOptions engine;

  void validate() const;
};

/// Median of each report cell over the measured runs. Throws RunError.
TimingReport bench_protocol(const ProtocolBenchConfig& config, const CryptoProvider& crypto);

std::string render_report(const TimingReport& report, OutputFormat format);

/// Restricts the calling thread to one CPU; false if the OS refuses.
bool pin_to_single_cpu();

/// Milliseconds with four decimals.
std::string format_ms4(std::int64_t nanoseconds);

}  // namespace wsext
