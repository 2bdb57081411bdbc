#include "doctest.h"
#include "httplib.h"
#include "wsext/error.hpp"
#include "wsext/net.hpp"

using namespace wsext;

namespace {

const CryptoProvider& crypto() {
  static const CryptoProvider c;
  return c;
}

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::invalid_term;
}

std::vector<std::string> shapes(const std::vector<TranscriptEntry>& t, const std::string& initiator) {
  std::vector<std::string> out;
  for (const auto& e : t)
    if (e.sender == initiator || e.receiver == initiator)
      out.push_back(std::to_string(e.step) + " " + envelope_shape(e.envelope_xml));
  return out;
}

}  // namespace

TEST_SUITE("net") {
  TEST_CASE("loopback delivers frames unchanged and times out when empty") {
    LoopbackChannel ch;
    Frame f{"Lowe-BAN", "s1", "<x>\xc3\xa9</x>"};
    ch.send(f);
    Frame got = ch.receive(std::chrono::milliseconds(10));
    CHECK(got.protocol == f.protocol);
    CHECK(got.session == f.session);
    CHECK(got.envelope == f.envelope);
    CHECK(ch.counters().messages_sent == 1);
    CHECK(error_of([&] { ch.receive(std::chrono::milliseconds(10)); }) == Errc::timeout);
    ch.close();
    CHECK(error_of([&] { ch.send(f); }) == Errc::channel_closed);
  }

  TEST_CASE("endpoints") {
    Endpoint e = Endpoint::parse("127.0.0.1:8080");
    CHECK(e.host == "127.0.0.1");
    CHECK(e.port == 8080);
    CHECK(Endpoint::parse("[::1]:9").host == "::1");
    for (const char* bad : {"localhost", ":80", "h:0", "h:65536", "h:8x"})
      CHECK(error_of([&] { Endpoint::parse(bad); }) == Errc::invalid_config);
  }

  TEST_CASE("faults carry the error name") {
    std::string xml = soap_fault(Errc::check_failed, "nonce-echo:Na & more");
    auto e = parse_soap_fault(xml);
    REQUIRE(e);
    CHECK(e->code() == Errc::check_failed);
    CHECK(std::string(e->what()).find("nonce-echo:Na & more") != std::string::npos);
    CHECK_FALSE(parse_soap_fault("<soap:Envelope xmlns:soap=\"http://www.w3.org/2003/05/soap-envelope\"/>"));
  }

  TEST_CASE("reply encodings round-trip") {
    std::vector<StepTiming> t{{"B", 1, false, 12345}, {"B", 2, true, 678}};
    auto back = decode_timings(encode_timings(t));
    REQUIRE(back.size() == 2);
    CHECK(back[0].role == "B");
    CHECK(back[0].construction == false);
    CHECK(back[1].nanoseconds == 678);
    std::map<std::string, std::map<std::string, std::string>> g{{"B", {{"Na", "ab"}}}};
    CHECK(decode_goals(encode_goals(g)) == g);
  }

  TEST_CASE("remote transports complete every protocol with matching transcripts") {
    ResponderHost host(crypto());
    auto http = start_http_server(host, "127.0.0.1", 0);
    auto tcp = start_tcp_server(host, "127.0.0.1", 0);
    for (const auto& p : register_builtin_protocols()) {
      INFO(p.name);
      LoopbackChannel local;
      RunResult base = run_protocol(p, local, world_for(p, local, crypto()), crypto());
      for (auto [kind, port] : {std::pair{ChannelKind::http_post, http->port()}, std::pair{ChannelKind::tcp, tcp->port()}}) {
        auto ch = make_channel(kind, Endpoint{"127.0.0.1", port});
        World w = world_for(p, *ch, crypto());
        RunResult r = run_protocol(p, *ch, w, crypto());
        CHECK(r.report.rows.size() == p.rows.size());
        CHECK(r.report.identities_hold());
        for (const auto& g : p.goals)
          for (const auto& role : g.roles) CHECK(r.goals[role].count(g.id));
        CHECK(shapes(r.transcript, p.initiator()) == shapes(base.transcript, p.initiator()));
      }
    }
    CHECK(host.open_sessions() == 0);
    http->stop();
    tcp->stop();
  }

  TEST_CASE("the server survives malformed input") {
    ResponderHost host(crypto());
    auto server = start_http_server(host, "127.0.0.1", 0);
    httplib::Client raw("127.0.0.1", server->port());
    httplib::Headers h{{"X-WSExt-Protocol", "Lowe-BAN"}, {"X-WSExt-Session", "bad"}};
    auto res = raw.Post("/", h, "<soap:Envelope", "application/soap+xml");
    REQUIRE(res);
    CHECK(res->status == 500);
    auto fault = parse_soap_fault(res->body);
    REQUIRE(fault);
    CHECK(fault->code() == Errc::malformed_xml);

    httplib::Headers unknown{{"X-WSExt-Protocol", "Nope"}, {"X-WSExt-Session", "x"}};
    res = raw.Post("/", unknown, "<a/>", "application/soap+xml");
    REQUIRE(res);
    REQUIRE(parse_soap_fault(res->body));
    CHECK(parse_soap_fault(res->body)->code() == Errc::invalid_protocol);

    const ProtocolSpec& p = find_protocol("Andrew RPC");
    auto ch = make_channel(ChannelKind::http_post, Endpoint{"127.0.0.1", server->port()});
    CHECK_NOTHROW(run_protocol(p, *ch, world_for(p, *ch, crypto()), crypto()));
    CHECK(host.open_sessions() == 0);
  }

  TEST_CASE("tampered requests fault and drop the session") {
    ResponderHost host(crypto());
    auto server = start_tcp_server(host, "127.0.0.1", 0);
    const ProtocolSpec& p = find_protocol("Lowe-BAN");
    auto ch = make_channel(ChannelKind::tcp, Endpoint{"127.0.0.1", server->port()});
    World w = world_for(p, *ch, crypto());
    RunOptions o;
    o.tamper = [](int step, std::string& xml) {
      if (step != 3) return;
      auto pos = xml.find('>', xml.find("<EncryptedBlock")) + 5;
      xml[pos] = xml[pos] == 'A' ? 'B' : 'A';
    };
    try {
      run_protocol(p, *ch, w, crypto(), o);
      FAIL("tampered run completed");
    } catch (const RunError& e) {
      CHECK(e.step() == 3);
    }
    CHECK(host.open_sessions() == 0);
  }

  TEST_CASE("an unreachable endpoint is a timeout") {
    int port;
    {
      ResponderHost host(crypto());
      auto s = start_tcp_server(host, "127.0.0.1", 0);
      port = s->port();
      s->stop();
    }
    for (auto kind : {ChannelKind::tcp, ChannelKind::http_post}) {
      auto ch = make_channel(kind, Endpoint{"127.0.0.1", port});
      CHECK(error_of([&] { ch->provision("Lowe-BAN"); }) == Errc::timeout);
    }
  }
}
