#include "wsext/bench.hpp"

#include <sched.h>

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "json.hpp"
#include "wsext/envelope.hpp"

namespace wsext {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t percentile(const std::vector<std::int64_t>& sorted, int num, int den) {
  // Linear interpolation between closest ranks.
  std::size_t n = sorted.size();
  std::int64_t pos = static_cast<std::int64_t>(n - 1) * num;
  std::size_t lo = static_cast<std::size_t>(pos / den);
  std::int64_t rem = pos % den;
  if (rem == 0 || lo + 1 >= n) return sorted[lo];
  return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * rem / den;
}

struct MicroCase {
  Term term;
  EnvelopeContext ctx;
  EnvelopeOptions options;
};

std::int64_t time_once(const MicroCase& c, std::size_t* octets) {
  auto t0 = Clock::now();
  Envelope e = build_envelope(c.term, c.ctx, c.options);
  std::string xml = serialize(e, c.options.codec);
  auto elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
  if (octets) *octets = xml.size();
  return elapsed;
}

}  // namespace

std::string_view to_string(OutputFormat f) noexcept {
  switch (f) {
    case OutputFormat::table: return "table";
    case OutputFormat::csv: return "csv";
    case OutputFormat::json: return "json";
  }
  return "?";
}

std::optional<OutputFormat> output_format_from_string(std::string_view s) noexcept {
  if (s == "table") return OutputFormat::table;
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  return std::nullopt;
}

std::string format_ms4(std::int64_t ns) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(ns) / 1e6);
  return buf;
}

Sample Sample::of(std::vector<std::int64_t> ns) {
  if (ns.empty()) return {};
  std::sort(ns.begin(), ns.end());
  return {percentile(ns, 1, 2), percentile(ns, 1, 4), percentile(ns, 3, 4)};
}

void MicroConfig::validate() const {
  if (iterations < 1) throw Error(Errc::invalid_config, "iterations must be at least 1");
  if (warmup < 0) throw Error(Errc::invalid_config, "warmup cannot be negative");
  if (sizes.empty()) throw Error(Errc::invalid_config, "size sweep is empty");
  for (auto s : sizes)
    if (s == 0) throw Error(Errc::invalid_config, "sizes must be positive");
}

void ProtocolBenchConfig::validate() const {
  if (iterations < 1) throw Error(Errc::invalid_config, "iterations must be at least 1");
  if (warmup < 0) throw Error(Errc::invalid_config, "warmup cannot be negative");
  if (transport != ChannelKind::loopback && !endpoint)
    throw Error(Errc::invalid_config, std::string(to_string(transport)) + " transport needs --endpoint");
  find_protocol(protocol);
}

MicroReport bench_micro(const MicroConfig& config, const CryptoProvider& crypto) {
  config.validate();
  MicroReport report;
  report.suite = crypto.suite().sk_algorithm + "/" + crypto.suite().pk_algorithm;
  report.iterations = config.iterations;

  KeyRing ring;
  Term kab = make_key(KeyMaterial{crypto.random_bytes(crypto.sk_key_length()), KeyEncoding::base64Binary, "Kab"});
  ring.add(KeyEntry{"Kab", KeyUse::symmetric, kab, {}, std::nullopt});
  KeyPair pair = crypto.pk_generate();
  Term pkb = make_key(KeyMaterial{pair.public_part, KeyEncoding::base64Binary, "PKb"});
  ring.add(KeyEntry{"PKb", KeyUse::public_encrypt, pkb, pair.private_part, std::nullopt});
  EnvelopeContext ctx{&crypto, &ring, {}};
  EnvelopeOptions options;
  options.message_id = "urn:uuid:00000000-0000-4000-8000-000000000000";

  for (std::size_t size : config.sizes) {
    Term m = make_data(UserData{crypto.random_bytes(size), "application/octet-stream", false});
    MicroCase plain{m, ctx, options};
    MicroCase sk{encrypt_term(m, FuncName::sk, kab), ctx, options};
    MicroCase pk{encrypt_term(m, FuncName::pk, pkb), ctx, options};
    MicroRow row;
    row.size = size;
    for (int i = 0; i < config.warmup; ++i) {
      time_once(plain, nullptr);
      time_once(sk, nullptr);
      time_once(pk, nullptr);
    }
    std::vector<std::int64_t> tp, ts, tk;
    for (int i = 0; i < config.iterations; ++i) {
      tp.push_back(time_once(plain, &row.plain_octets));
      ts.push_back(time_once(sk, &row.sk_octets));
      tk.push_back(time_once(pk, &row.pk_octets));
    }
    row.plain = Sample::of(std::move(tp));
    row.sk = Sample::of(std::move(ts));
    row.pk = Sample::of(std::move(tk));
    report.rows.push_back(row);
  }
  return report;
}

std::string MicroReport::render(OutputFormat format) const {
  if (format == OutputFormat::json) {
    nlohmann::json j;
    j["suite"] = suite;
    j["iterations"] = iterations;
    j["rows"] = nlohmann::json::array();
    auto cell = [](const Sample& s) {
      return nlohmann::json{{"median_ms", format_ms4(s.median_ns)},
                            {"q1_ms", format_ms4(s.q1_ns)},
                            {"q3_ms", format_ms4(s.q3_ns)}};
    };
    for (const auto& r : rows)
      j["rows"].push_back({{"size_octets", r.size},
                           {"plain", cell(r.plain)},
                           {"sk", cell(r.sk)},
                           {"pk", cell(r.pk)},
                           {"envelope_octets", {{"plain", r.plain_octets}, {"sk", r.sk_octets}, {"pk", r.pk_octets}}}});
    return j.dump(2) + "\n";
  }
  const std::vector<std::string> head{"size_octets", "plain_median_ms", "plain_iqr_ms", "sk_median_ms",
                                      "sk_iqr_ms",   "pk_median_ms",    "pk_iqr_ms"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rows)
    cells.push_back({std::to_string(r.size), format_ms4(r.plain.median_ns), format_ms4(r.plain.q3_ns - r.plain.q1_ns),
                     format_ms4(r.sk.median_ns), format_ms4(r.sk.q3_ns - r.sk.q1_ns), format_ms4(r.pk.median_ns),
                     format_ms4(r.pk.q3_ns - r.pk.q1_ns)});
  std::string out;
  if (format == OutputFormat::csv) {
    for (const auto& row : cells) {
      for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
      out += "\n";
    }
    return out;
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += "  ";
      out += std::string(width[c] - row[c].size(), ' ') + row[c];
    }
    out += "\n";
  }
  return out;
}

TimingReport bench_protocol(const ProtocolBenchConfig& config, const CryptoProvider& crypto) {
  config.validate();
  const ProtocolSpec& spec = find_protocol(config.protocol);
  std::unique_ptr<Channel> channel = make_channel(config.transport, config.endpoint);
  World world = world_for(spec, *channel, crypto);
  RunOptions options;
  options.engine = config.engine;
  std::vector<std::vector<RawRow>> runs;
  for (int i = 0; i < config.warmup + config.iterations; ++i) {
    RunResult r = run_protocol(spec, *channel, world, crypto, options);
    if (i >= config.warmup) runs.push_back(aggregate_rows(spec, r.timings));
  }
  channel->close();
  return median_report(spec, runs);
}

std::string render_report(const TimingReport& report, OutputFormat format) {
  switch (format) {
    case OutputFormat::csv: return report.to_csv();
    case OutputFormat::json: return report.to_json() + "\n";
    case OutputFormat::table: break;
  }
  return report.to_table();
}

bool pin_to_single_cpu() {
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(0, &set);
  return sched_setaffinity(0, sizeof set, &set) == 0;
}

}  // namespace wsext
