#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "wsext/error.hpp"
#include "wsext/net.hpp"
#include "wsext/protocol.hpp"

using namespace wsext;

namespace {

const CryptoProvider& crypto() {
  static const CryptoProvider c;
  return c;
}

std::pair<Errc, std::string> error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return {e.code(), e.what()};
  }
  FAIL("no error raised");
  return {Errc::invalid_term, ""};
}

const char* kTiny = R"(protocol Tiny
roles A B
symbol A = name alice
symbol B = name bob
symbol K = key
symbol N = nonce
knows A : A B K
knows B : A B K
1. A -> B : A,{N}sk(K)
   fresh N
2. B -> A : N
goal N : A B
row Tiny Initiator : A
row Tiny Respondent : B
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

bool has_check(const Step& s, CheckKind k, const std::string& subject) {
  for (const auto& c : s.checks)
    if (c.kind == k && c.subject == subject) return true;
  return false;
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("scripts parse and record receiver checks") {
    ProtocolSpec p = parse_protocol(kTiny);
    CHECK(p.name == "Tiny");
    CHECK(p.initiator() == "A");
    REQUIRE(p.steps.size() == 2);
    CHECK(print_term(p.steps[0].message) == "A,{N}sk(K)");
    CHECK(has_check(p.steps[1], CheckKind::nonce_echo, "N"));
    CHECK(has_check(p.steps[0], CheckKind::decryptability, "{N}sk(K)"));
    CHECK(p.rows.size() == 2);
  }

  TEST_CASE("non-executable scripts are rejected") {
    CHECK(error_of([] { parse_protocol(replace(kTiny, "knows B : A B K", "knows B : A B")); }).first ==
          Errc::invalid_protocol);
    CHECK(error_of([] { parse_protocol(replace(kTiny, "   fresh N\n", "")); }).first == Errc::invalid_protocol);
    CHECK(error_of([] { parse_protocol(replace(kTiny, "2. B -> A", "2. A -> B")); }).first == Errc::invalid_protocol);
    CHECK(error_of([] { parse_protocol(replace(kTiny, "sk(K)", "sk(N)")); }).first == Errc::invalid_protocol);
    CHECK(error_of([] { parse_protocol(replace(kTiny, "goal N : A B", "goal Q : A B")); }).first ==
          Errc::invalid_protocol);
    CHECK(error_of([] { parse_protocol(replace(kTiny, "row Tiny Respondent : B", "row Tiny Respondent : C")); }).first ==
          Errc::invalid_protocol);
    CHECK(error_of([] { find_protocol("Needham-Schroeder"); }).first == Errc::invalid_protocol);
  }

  TEST_CASE("builtin protocols") {
    const auto& all = register_builtin_protocols();
    REQUIRE(all.size() == 5);
    for (const char* n : {"Lowe-BAN", "ISO9798", "Kerberos", "CCITT X.509", "Andrew RPC"}) {
      const ProtocolSpec& p = find_protocol(n);
      CHECK(p.name == n);
      CHECK_NOTHROW(check_executable(p));
    }
    CHECK(find_protocol("Lowe-BAN").rows.size() == 2);
    CHECK(find_protocol("Kerberos").rows.size() == 6);
    CHECK(find_protocol("Kerberos").steps.size() == 6);
  }

  TEST_CASE("world JSON round-trips") {
    const ProtocolSpec& p = find_protocol("CCITT X.509");
    World w = World::generate(p, crypto());
    World back = World::from_json(w.to_json(), p);
    CHECK(back.protocol == w.protocol);
    CHECK(back.values == w.values);
    CHECK(back.privates.size() == w.privates.size());
    CHECK(back.to_json() == w.to_json());
    CHECK(error_of([&] { World::from_json(w.to_json(), find_protocol("Lowe-BAN")); }).first == Errc::invalid_config);
  }

  TEST_CASE("stepwise execution enforces turn order and binds goals") {
    const ProtocolSpec& p = find_protocol("Lowe-BAN");
    World w = World::generate(p, crypto());
    RoleState a(p, "A", w), b(p, "B", w);
    CHECK(error_of([&] { step_construct(b, p, crypto()); }).first == Errc::not_your_turn);
    Constructed m1 = step_construct(a, p, crypto());
    CHECK(m1.step == 1);
    CHECK(error_of([&] { step_construct(a, p, crypto()); }).first == Errc::not_your_turn);
    step_process(b, p, m1.xml, crypto());
    for (int s = 2; s <= 4; ++s) {
      RoleState& sender = s % 2 ? a : b;
      RoleState& receiver = s % 2 ? b : a;
      step_process(receiver, p, step_construct(sender, p, crypto()).xml, crypto());
    }
    CHECK(a.done());
    CHECK(b.done());
    CHECK(goal_digests(a, p, crypto()) == goal_digests(b, p, crypto()));
    CHECK(goal_digests(a, p, crypto()).size() == 2);
    CHECK(a.transcript().size() == 4);
    CHECK(a.timings().size() == 4);
  }

  TEST_CASE("replayed messages fail the nonce echo") {
    const ProtocolSpec& p = find_protocol("Lowe-BAN");
    World w = World::generate(p, crypto());
    RoleState a1(p, "A", w), b1(p, "B", w), a2(p, "A", w), b2(p, "B", w);
    step_process(b1, p, step_construct(a1, p, crypto()).xml, crypto());
    std::string old_reply = step_construct(b1, p, crypto()).xml;
    step_process(b2, p, step_construct(a2, p, crypto()).xml, crypto());
    auto [code, what] = error_of([&] { step_process(a2, p, old_reply, crypto()); });
    CHECK(code == Errc::check_failed);
    CHECK(what.find("nonce-echo:Na") != std::string::npos);
  }

  TEST_CASE("a message of the wrong step is a protocol violation") {
    const ProtocolSpec& p = find_protocol("Lowe-BAN");
    World w = World::generate(p, crypto());
    RoleState a(p, "A", w), b(p, "B", w);
    Constructed m1 = step_construct(a, p, crypto());
    step_process(b, p, m1.xml, crypto());
    CHECK(error_of([&] { step_process(a, p, m1.xml, crypto()); }).first == Errc::protocol_violation);
  }

  TEST_CASE("stale timestamps fail freshness") {
    const ProtocolSpec& p = find_protocol("Kerberos");
    World w = World::generate(p, crypto());
    RoleState c(p, "C", w), as(p, "AS", w);
    EngineOptions strict;
    strict.freshness_window = std::chrono::milliseconds(5);
    step_process(as, p, step_construct(c, p, crypto()).xml, crypto());
    std::string reply = step_construct(as, p, crypto()).xml;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    auto [code, what] = error_of([&] { step_process(c, p, reply, crypto(), strict); });
    CHECK(code == Errc::check_failed);
    CHECK(what.find("timestamp-freshness:T1") != std::string::npos);
  }

  TEST_CASE("every builtin protocol completes over loopback with agreed goals") {
    for (const auto& p : register_builtin_protocols()) {
      LoopbackChannel ch;
      World w = world_for(p, ch, crypto());
      RunResult r = run_protocol(p, ch, w, crypto());
      INFO(p.name);
      CHECK(r.transcript.size() == p.steps.size());
      CHECK(r.report.rows.size() == p.rows.size());
      CHECK(r.report.identities_hold());
      std::set<std::string> roles_with_goals;
      for (const auto& g : p.goals)
        for (const auto& role : g.roles) {
          REQUIRE(r.goals.count(role));
          CHECK(r.goals.at(role).count(g.id));
          roles_with_goals.insert(role);
        }
    }
  }

  TEST_CASE("tampering aborts the run at the tampered step") {
    const ProtocolSpec& p = find_protocol("Kerberos");
    LoopbackChannel ch;
    World w = world_for(p, ch, crypto());
    RunOptions o;
    o.tamper = [](int step, std::string& xml) {
      if (step != 3) return;
      auto pos = xml.find("<EncryptedBlock");
      REQUIRE(pos != std::string::npos);
      char& c = xml[xml.find('>', pos) + 20];
      c = c == 'A' ? 'B' : 'A';
    };
    try {
      run_protocol(p, ch, w, crypto(), o);
      FAIL("tampered run completed");
    } catch (const RunError& e) {
      CHECK(e.step() == 3);
      CHECK(e.transcript().back().step == 3);
    }
  }
}

TEST_SUITE("report") {
  TEST_CASE("fixed-point rounding") {
    CHECK(to_cms(0) == 0);
    CHECK(to_cms(4'999) == 0);
    CHECK(to_cms(5'000) == 1);
    CHECK(to_cms(12'345'678) == 1235);
    CHECK(format_cms(1235) == "12.35");
    CHECK(format_cms(5) == "0.05");
  }

  TEST_CASE("CSV round-trip and identities") {
    TimingReport r;
    r.protocol = "X";
    r.rows = {{"X Initiator", 1181, 368}, {"X Respondent", 286, 162}};
    CHECK(r.total_cms() == 1997);
    CHECK(r.identities_hold());
    TimingReport back = TimingReport::from_csv(r.to_csv());
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[1].processing_cms == 162);
    CHECK(back.to_csv() == r.to_csv());
    CHECK(error_of([] { TimingReport::from_csv("participant_role,a,b,c,d\nX,1.00,1.00,3.00,3.00\n"); }).first ==
          Errc::invalid_config);
    CHECK(error_of([] { TimingReport::from_csv("participant_role,a,b,c,d\nX,1.00,1.00,2.00,3.00\n"); }).first ==
          Errc::invalid_config);
    CHECK(error_of([] { TimingReport::from_csv("participant_role,a,b,c,d\nX,1.001,1.00,2.00,2.00\n"); }).first ==
          Errc::invalid_config);
  }

  TEST_CASE("reference timing table satisfies both identities") {
    std::string text = testgen::fixture_text("table1.csv");
    std::istringstream in(text);
    std::string line, section;
    int sections = 0;
    auto flush = [&] {
      if (section.empty()) return;
      TimingReport r = TimingReport::from_csv(section);
      CHECK(r.identities_hold());
      ++sections;
      section.clear();
    };
    while (std::getline(in, line)) {
      if (line.rfind("# ", 0) == 0) {
        flush();
        continue;
      }
      section += line + "\n";
    }
    flush();
    CHECK(sections == 5);
  }

  TEST_CASE("median report takes the per-cell median") {
    const ProtocolSpec& p = find_protocol("Lowe-BAN");
    std::vector<std::vector<RawRow>> runs{{{"Lowe-BAN Initiator", 1'000'000, 30'000}, {"Lowe-BAN Respondent", 5, 5}},
                                          {{"Lowe-BAN Initiator", 3'000'000, 10'000}, {"Lowe-BAN Respondent", 5, 5}},
                                          {{"Lowe-BAN Initiator", 2'000'000, 20'000}, {"Lowe-BAN Respondent", 5, 5}}};
    TimingReport r = median_report(p, runs);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].construction_cms == 200);
    CHECK(r.rows[0].processing_cms == 2);
    CHECK(r.identities_hold());
  }
}
