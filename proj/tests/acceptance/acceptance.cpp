#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "fixtures.hpp"
#include "generators.hpp"
#include "wsext/bench.hpp"
#include "wsext/envelope.hpp"
#include "wsext/error.hpp"
#include "wsext/net.hpp"
#include "wsext/notation.hpp"
#include "wsext/protocol.hpp"
#include "wsext/token_codec.hpp"

using namespace wsext;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPatternBudgetSeconds = 1.0;
constexpr int kMinPatternRowsPerKind = 20;
constexpr int kTokenRoundTrips = 1000;
constexpr int kEnvelopeRoundTrips = 500;
constexpr int kEnvelopeDepth = 4;
constexpr int kNotationRoundTrips = 1000;
constexpr double kProtocolBudgetSeconds = 30.0;
constexpr int kTamperTrialsPerBlock = 2;
constexpr int kMicroIterations = 100;
constexpr int kMicroWarmup = 10;
constexpr int kProtocolIterations = 15;
constexpr int kProtocolWarmup = 3;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::vector<TimingReport> g_reports;

Bytes hex(const nlohmann::json& j) { return *from_hex(j.get<std::string>()); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Verdict codec_fidelity() {
  auto t0 = Clock::now();
  std::istringstream lines(testgen::fixture_text("patterns.jsonl"));
  std::map<std::string, int> rows;
  int disagree = 0;
  std::string line;
  while (std::getline(lines, line)) {
    auto row = nlohmann::json::parse(line);
    auto kind = pattern_kind_from_string(row["kind"].get<std::string>());
    if (!kind || validate_name(*kind, row["value"].get<std::string>()) != row["accept"].get<bool>()) ++disagree;
    ++rows[row["kind"].get<std::string>()];
  }
  double elapsed = seconds_since(t0);
  bool enough = rows.size() == 4;
  for (const auto& [k, n] : rows) enough = enough && n >= kMinPatternRowsPerKind;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d disagreements, %.3f s", disagree, elapsed);
  return {enough && disagree == 0 && elapsed < kPatternBudgetSeconds, buf};
}

Verdict round_trips() {
  testgen::Gen g(0xacce57);
  int failures = 0;
  for (int i = 0; i < kTokenRoundTrips; ++i) {
    Term t = g.token_leaf();
    try {
      if (!(decode_token(encode_token(t).xml) == t)) ++failures;
    } catch (const Error&) {
      ++failures;
    }
  }
  CryptoProvider crypto;
  testgen::EnvelopeKeys keys(crypto);
  testgen::EnvelopeGen envelopes(g, keys);
  for (int i = 0; i < kEnvelopeRoundTrips; ++i) {
    Term t = envelopes.message(kEnvelopeDepth);
    try {
      EnvelopeContext send{&crypto, &keys.ring, {}};
      EnvelopeContext recv{&crypto, &keys.ring, envelopes.known};
      if (!(parse_envelope(serialize(build_envelope(t, send)), recv) == normalize_pairs(t))) ++failures;
    } catch (const Error&) {
      ++failures;
    }
  }
  testgen::NotationGen notation(g);
  for (int i = 0; i < kNotationRoundTrips; ++i) {
    Term t = notation.term(g.uniform(1, 6));
    try {
      std::string printed = print_term(t);
      Term back = parse_term(printed, notation.table);
      if (!(back == t) || print_term(back) != printed) ++failures;
    } catch (const Error&) {
      ++failures;
    }
  }
  return {failures == 0, std::to_string(kTokenRoundTrips) + " tokens, " + std::to_string(kEnvelopeRoundTrips) +
                             " envelopes, " + std::to_string(kNotationRoundTrips) + " terms, " +
                             std::to_string(failures) + " failures"};
}

Verdict crypto_correctness() {
  auto v = testgen::fixture_json("crypto_vectors.json");
  CryptoProvider c;
  CryptoProvider strong(AlgorithmSuite::named("strong"));
  int checked = 0, failed = 0;
  auto expect = [&](bool ok) {
    ++checked;
    failed += !ok;
  };
  for (const auto& t : v["aes_gcm"]) {
    expect(c.sk_encrypt_with_iv(hex(t["key"]), hex(t["iv"]), hex(t["plaintext"])) == hex(t["wire"]));
    expect(c.sk_decrypt(hex(t["key"]), hex(t["wire"])) == hex(t["plaintext"]));
  }
  const auto& s = v["aes_256_gcm"];
  expect(strong.sk_encrypt_with_iv(hex(s["key"]), hex(s["iv"]), hex(s["plaintext"])) == hex(s["wire"]));
  for (const auto& t : v["sha256"]) expect(c.hash(hex(t["data"])) == hex(t["digest"]));
  expect(strong.hash(to_bytes("abc")) == hex(v["sha512_abc"]));
  for (const auto& t : v["hmac_sha256"]) expect(c.hmac(hex(t["key"]), hex(t["data"])) == hex(t["tag"]));
  expect(c.dh_prime() == hex(v["ffdhe2048_p"]));
  expect(strong.dh_prime() == hex(v["ffdhe3072_p"]));
  const auto& d = v["dh"];
  expect(c.dh_public_from_private(hex(d["x"])) == hex(d["gx"]));
  expect(c.dh_raw_shared(hex(d["x"]), hex(d["gy"])) == hex(d["z"]));
  expect(c.dh_shared(hex(d["y"]), hex(d["gx"])) == hex(d["key"]));
  const auto& r = v["rsa"];
  expect(c.pk_decrypt(hex(r["private_der"]), hex(r["oaep_wire"])) == hex(r["message"]));
  expect(c.verify(hex(r["public_der"]), hex(r["message"]), hex(r["pss_signature"])));

  Bytes key = c.random_bytes(c.sk_key_length());
  KeyPair enc = c.pk_generate(), sig = c.sig_generate();
  for (std::size_t n : {0u, 1u, 190u, 191u, 4096u}) {
    Bytes m = c.random_bytes(n);
    expect(c.sk_decrypt(key, c.sk_encrypt(key, m)) == m);
    expect(c.pk_decrypt(enc.private_part.view(), c.pk_encrypt(enc.public_part, m)) == m);
    expect(c.verify(sig.public_part, m, c.sign(sig.private_part.view(), m)));
    expect(c.hmac_verify(key, m, c.hmac(key, m)));
  }
  KeyPair a = c.dh_generate(), b = c.dh_generate();
  expect(c.dh_shared(a.private_part.view(), b.public_part) == c.dh_shared(b.private_part.view(), a.public_part));
  return {failed == 0, std::to_string(checked) + " checks, " + std::to_string(failed) + " failed"};
}

std::vector<std::size_t> block_text_offsets(const std::string& xml) {
  std::vector<std::size_t> out;
  for (auto pos = xml.find("<EncryptedBlock"); pos != std::string::npos; pos = xml.find("<EncryptedBlock", pos + 1))
    out.push_back(xml.find('>', pos) + 1);
  return out;
}

// Flips one octet of the decoded ciphertext of the given block.
void flip_octet(std::string& xml, std::size_t text_begin, testgen::Gen& g) {
  std::size_t text_end = xml.find('<', text_begin);
  Bytes ct = *base64_decode(std::string_view(xml).substr(text_begin, text_end - text_begin));
  ct[static_cast<std::size_t>(g.uniform(0, static_cast<int>(ct.size()) - 1))] ^=
      static_cast<std::uint8_t>(g.uniform(1, 255));
  xml.replace(text_begin, text_end - text_begin, base64_encode(ct));
}

bool goals_agree(const ProtocolSpec& p, const RunResult& r) {
  for (const auto& goal : p.goals) {
    std::optional<std::string> digest;
    for (const auto& role : goal.roles) {
      auto it = r.goals.find(role);
      if (it == r.goals.end() || !it->second.count(goal.id)) return false;
      if (digest && *digest != it->second.at(goal.id)) return false;
      digest = it->second.at(goal.id);
    }
  }
  return true;
}

Verdict protocol_completion() {
  auto t0 = Clock::now();
  CryptoProvider crypto;
  ResponderHost host(crypto);
  auto server = start_http_server(host, "127.0.0.1", 0);
  testgen::Gen g(0x7a3e);
  int completed = 0, tampered = 0, survived = 0;
  std::string problems;
  for (const auto& p : register_builtin_protocols()) {
    for (auto kind : {ChannelKind::loopback, ChannelKind::http_post}) {
      auto ch = make_channel(kind, Endpoint{"127.0.0.1", server->port()});
      World w = world_for(p, *ch, crypto);
      RunResult clean = run_protocol(p, *ch, w, crypto);
      if (goals_agree(p, clean)) {
        ++completed;
        g_reports.push_back(clean.report);
      } else {
        problems += " goals:" + p.name + "/" + std::string(to_string(kind));
      }
      for (const auto& step : p.steps) {
        if (kind != ChannelKind::loopback && step.sender != p.initiator()) continue;
        auto entry = std::find_if(clean.transcript.begin(), clean.transcript.end(),
                                  [&](const TranscriptEntry& e) { return e.step == step.number; });
        if (entry == clean.transcript.end()) continue;
        std::size_t count = block_text_offsets(entry->envelope_xml).size();
        for (std::size_t b = 0; b < count; ++b)
          for (int trial = 0; trial < kTamperTrialsPerBlock; ++trial) {
            RunOptions o;
            o.tamper = [&, target = step.number, b](int s, std::string& xml) {
              if (s == target) flip_octet(xml, block_text_offsets(xml)[b], g);
            };
            ++tampered;
            try {
              run_protocol(p, *ch, w, crypto, o);
              ++survived;
              problems += " survived:" + p.name + "#" + std::to_string(step.number);
            } catch (const RunError&) {
            }
          }
      }
    }
  }
  server->stop();
  double elapsed = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d/10 clean runs agree, %d/%d tampered runs aborted, %.2f s", completed,
                tampered - survived, tampered, elapsed);
  return {completed == 10 && tampered > 0 && survived == 0 && elapsed < kProtocolBudgetSeconds, buf + problems};
}

MicroReport& micro() {
  static MicroReport report = [] {
    MicroConfig config;
    config.iterations = kMicroIterations;
    config.warmup = kMicroWarmup;
    config.sizes = {256, 1024, 4096, 16384};
    return bench_micro(config, CryptoProvider());
  }();
  return report;
}

Verdict symmetric_over_plain() {
  std::string detail;
  bool ok = micro().rows.size() == 4;
  for (const auto& r : micro().rows) {
    ok = ok && r.sk.median_ns > r.plain.median_ns;
    detail += std::to_string(r.size) + ":" + format_ms4(r.plain.median_ns) + "<" + format_ms4(r.sk.median_ns) + " ";
  }
  return {ok, detail + "ms"};
}

Verdict asymmetric_over_symmetric() {
  std::string detail;
  bool ok = micro().rows.size() == 4;
  for (const auto& r : micro().rows) {
    ok = ok && r.pk.median_ns > r.sk.median_ns;
    detail += std::to_string(r.size) + ":" + format_ms4(r.sk.median_ns) + "<" + format_ms4(r.pk.median_ns) + " ";
  }
  return {ok, detail + "ms"};
}

Verdict protocol_ordering() {
  CryptoProvider crypto;
  std::map<std::string, std::int64_t> totals;
  for (const auto& p : register_builtin_protocols()) {
    ProtocolBenchConfig config;
    config.protocol = p.name;
    config.iterations = kProtocolIterations;
    config.warmup = kProtocolWarmup;
    TimingReport r = bench_protocol(config, crypto);
    g_reports.push_back(r);
    totals[p.name] = r.total_cms();
  }
  std::int64_t worst_symmetric = 0, best_asymmetric = INT64_MAX;
  for (const char* n : {"Lowe-BAN", "Kerberos", "Andrew RPC"}) worst_symmetric = std::max(worst_symmetric, totals[n]);
  for (const char* n : {"ISO9798", "CCITT X.509"}) best_asymmetric = std::min(best_asymmetric, totals[n]);
  std::string detail;
  for (const auto& [n, t] : totals) detail += n + "=" + format_cms(t) + " ";
  return {worst_symmetric < best_asymmetric, detail + "ms"};
}

Verdict report_arithmetic() {
  int reports = 0, broken = 0;
  auto check = [&](const TimingReport& r) {
    ++reports;
    bool ok = r.identities_hold();
    try {
      TimingReport back = TimingReport::from_csv(r.to_csv());
      ok = ok && back.to_csv() == r.to_csv();
    } catch (const Error&) {
      ok = false;
    }
    broken += !ok;
  };
  for (const auto& r : g_reports) check(r);
  std::istringstream in(testgen::fixture_text("table1.csv"));
  std::string line, section;
  int sections = 0;
  auto flush = [&] {
    if (section.empty()) return;
    try {
      check(TimingReport::from_csv(section));
    } catch (const Error&) {
      ++reports;
      ++broken;
    }
    ++sections;
    section.clear();
  };
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0)
      flush();
    else
      section += line + "\n";
  }
  flush();
  return {broken == 0 && sections == 5 && reports > 5,
          std::to_string(reports) + " reports (" + std::to_string(sections) + " reference), " +
              std::to_string(broken) + " broken"};
}

}  // namespace

int main() {
  pin_to_single_cpu();
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"codec fidelity", codec_fidelity},
      {"round-trip suites", round_trips},
      {"crypto correctness", crypto_correctness},
      {"protocol completion", protocol_completion},
      {"sk exceeds plain", symmetric_over_plain},
      {"pk exceeds sk", asymmetric_over_symmetric},
      {"protocol ordering", protocol_ordering},
      {"report arithmetic", report_arithmetic},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
