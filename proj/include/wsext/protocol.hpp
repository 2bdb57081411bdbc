#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wsext/channel.hpp"
#include "wsext/crypto.hpp"
#include "wsext/envelope.hpp"
#include "wsext/error.hpp"
#include "wsext/notation.hpp"
#include "wsext/term.hpp"

namespace wsext {

// ---- Protocol scripts ----

enum class CheckKind { echo, nonce_echo, timestamp_freshness, signature, decryptability, digest };

std::string_view to_string(CheckKind k) noexcept;

struct Check {
  CheckKind kind;
  std::string subject;
};

/// `derive Role X = dh(own, peer)`: X becomes the key agreed from the role's
/// private half of `own` and the public value `peer`.
struct Derivation {
  std::string role;
  std::string target;
  std::string own;
  std::string peer;
};

struct Step {
  int number = 0;
  std::string sender;
  std::string receiver;
  std::string template_text;
  Term message;
  std::vector<std::string> fresh;
  std::vector<Derivation> derive;
  /// Receiver-side checks, computed at registration.
  std::vector<Check> checks;
};

struct Goal {
  std::string id;
  std::vector<std::string> roles;
};

/// One report row: a role's work over a subset of steps.
struct RowSpec {
  std::string label;
  std::string role;
  std::vector<int> steps;
};

struct ProtocolSpec {
  std::string name;
  std::vector<std::string> roles;
  /// Declared identifiers, with literal values where the script gives one.
  SymbolTable symbols;
  std::map<std::string, std::set<std::string>> initial_knowledge;
  /// Identifiers whose private half a role holds.
  std::map<std::string, std::set<std::string>> owns;
  std::vector<Step> steps;
  std::vector<Goal> goals;
  std::vector<RowSpec> rows;
  std::string source;

  const std::string& initiator() const { return steps.front().sender; }
  Sort sort_of(std::string_view id) const;
  const Step& step(int number) const;
};

/// Parses a protocol script and runs the executability check.
/// Throws InvalidProtocol or SyntaxError.
ProtocolSpec parse_protocol(std::string_view script);

/// Knowledge-flow check: every role can build every message it sends and all
/// goals are known by their roles at the end. Throws InvalidProtocol.
void check_executable(const ProtocolSpec& spec);

/// Lowe-BAN, ISO9798, Kerberos, CCITT X.509, Andrew RPC.
const std::vector<ProtocolSpec>& register_builtin_protocols();
/// Throws InvalidProtocol for an unknown name.
const ProtocolSpec& find_protocol(std::string_view name);

// ---- Long-term material ----

/// Values for every identifier some role knows before the run, with the
/// private halves of asymmetric keys. Generated once, outside any timing.
struct World {
  std::string protocol;
  std::map<std::string, Term> values;
  std::map<std::string, SecretBytes> privates;

  static World generate(const ProtocolSpec& spec, const CryptoProvider& crypto);
  std::string to_json() const;
  static World from_json(std::string_view json, const ProtocolSpec& spec);
};

// ---- Role execution ----

struct EngineOptions {
  std::chrono::milliseconds freshness_window{300'000};
  CodecOptions codec;
  std::chrono::milliseconds receive_timeout{10'000};
};

struct TranscriptEntry {
  int step = 0;
  std::string sender;
  std::string receiver;
  std::string notation;
  std::string envelope_xml;
};

struct Constructed;

class RoleState {
 public:
  RoleState(const ProtocolSpec& spec, std::string role, const World& world);

  const std::string& role() const noexcept { return role_; }
  const std::map<std::string, Term>& knowledge() const noexcept { return knowledge_; }
  std::optional<Term> value(std::string_view id) const;
  bool holds_private(std::string_view id) const { return privates_.count(std::string(id)) != 0; }
  /// Index into this role's own sequence of sends and receives.
  std::size_t step_cursor() const noexcept { return cursor_; }
  bool done() const noexcept { return cursor_ >= involvement_.size(); }
  /// Next step this role takes part in, if any.
  std::optional<int> next_step() const;
  bool next_is_send() const;
  const std::vector<TranscriptEntry>& transcript() const noexcept { return transcript_; }
  const std::vector<StepTiming>& timings() const noexcept { return timings_; }

  /// Throws CheckFailed if `id` is already bound to a different value.
  void bind(const std::string& id, const Term& value);
  void bind_private(const std::string& id, SecretBytes secret);
  KeyRing key_ring() const;
  std::vector<Term> known_terms() const;

 private:
  friend struct Engine;
  friend Constructed step_construct(RoleState&, const ProtocolSpec&, const CryptoProvider&, const EngineOptions&);
  friend std::chrono::nanoseconds step_process(RoleState&, const ProtocolSpec&, std::string_view,
                                               const CryptoProvider&, const EngineOptions&);

  const ProtocolSpec* spec_;
  std::string role_;
  std::map<std::string, Term> knowledge_;
  std::map<std::string, SecretBytes> privates_;
  /// Received blocks this role cannot open, by template notation.
  std::map<std::string, Term> opaque_;
  std::vector<int> involvement_;
  std::size_t cursor_ = 0;
  std::vector<TranscriptEntry> transcript_;
  std::vector<StepTiming> timings_;
};

struct Constructed {
  int step = 0;
  Envelope envelope;
  std::string xml;
  std::chrono::nanoseconds elapsed{0};
};

/// Throws NotYourTurn, MissingKnowledge.
Constructed step_construct(RoleState& state, const ProtocolSpec& spec, const CryptoProvider& crypto,
                           const EngineOptions& options = {});

/// Throws NotYourTurn, CheckFailed, DecryptFailure, ProtocolViolation.
std::chrono::nanoseconds step_process(RoleState& state, const ProtocolSpec& spec, std::string_view envelope_xml,
                                      const CryptoProvider& crypto, const EngineOptions& options = {});

/// Digest of each goal value the role holds, for cross-party comparison.
std::map<std::string, std::string> goal_digests(const RoleState& state, const ProtocolSpec& spec,
                                                const CryptoProvider& crypto);

// ---- Timing reports ----

/// Centi-millisecond fixed point keeps both sum identities exact.
struct TimingRow {
  std::string participant_role;
  std::int64_t construction_cms = 0;
  std::int64_t processing_cms = 0;
  std::int64_t participant_cms() const noexcept { return construction_cms + processing_cms; }
};

struct TimingReport {
  std::string protocol;
  std::vector<TimingRow> rows;

  std::int64_t total_cms() const noexcept;
  bool identities_hold() const noexcept;

  /// participant role, construction, processing, participant total, protocol total
  std::string to_csv() const;
  std::string to_table() const;
  std::string to_json() const;
  /// Throws InvalidConfig on malformed input or broken identities.
  static TimingReport from_csv(std::string_view csv);
};

std::string format_cms(std::int64_t cms);
/// Rounds to the nearest hundredth of a millisecond.
std::int64_t to_cms(std::int64_t nanoseconds) noexcept;

/// Per-row construction/processing nanoseconds for one run.
struct RawRow {
  std::string label;
  std::int64_t construction_ns = 0;
  std::int64_t processing_ns = 0;
};

std::vector<RawRow> aggregate_rows(const ProtocolSpec& spec, const std::vector<StepTiming>& timings);
/// Median of each cell over the runs, then fixed-point rounding.
TimingReport median_report(const ProtocolSpec& spec, const std::vector<std::vector<RawRow>>& runs);

// ---- Whole runs ----

struct RunOptions {
  EngineOptions engine;
  /// Called on every locally built envelope before it is sent.
  std::function<void(int step, std::string& xml)> tamper;
  std::optional<std::string> session;
};

struct RunResult {
  std::vector<TranscriptEntry> transcript;
  std::vector<StepTiming> timings;
  TimingReport report;
  /// role -> goal id -> digest, for every role that took part.
  std::map<std::string, std::map<std::string, std::string>> goals;
  std::string session;
};

class RunError : public Error {
 public:
  RunError(const Error& cause, int step, std::vector<TranscriptEntry> transcript);
  int step() const noexcept { return step_; }
  Errc cause() const noexcept { return code(); }
  const std::vector<TranscriptEntry>& transcript() const noexcept { return transcript_; }

 private:
  int step_;
  std::vector<TranscriptEntry> transcript_;
};

/// Long-term material for a run: fetched from the far side when it hosts
/// roles, generated locally otherwise.
World world_for(const ProtocolSpec& spec, Channel& channel, const CryptoProvider& crypto);

/// Drives every local role to completion and checks the agreement goals.
/// Throws RunError.
RunResult run_protocol(const ProtocolSpec& spec, Channel& channel, const World& world, const CryptoProvider& crypto,
                       const RunOptions& options = {});

/// Envelope with random and per-message values blanked, for comparing runs.
std::string envelope_shape(std::string_view envelope_xml);

}  // namespace wsext
