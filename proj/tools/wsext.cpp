#include <signal.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "wsext/bench.hpp"
#include "wsext/envelope.hpp"
#include "wsext/net.hpp"
#include "wsext/notation.hpp"
#include "wsext/protocol.hpp"
#include "wsext/token_codec.hpp"

namespace {

using namespace wsext;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Common {
  std::string suite = "default";
  bool strict = false;
  std::string format = "table";
  /// Empty means the subcommand's default: http for serve, loopback otherwise.
  std::string transport;
  std::string endpoint;
  int timeout_ms = 10'000;
};

CryptoProvider make_crypto(const Common& c) { return CryptoProvider(AlgorithmSuite::named(c.suite)); }

EngineOptions engine_options(const Common& c) {
  EngineOptions e;
  e.codec.strict = c.strict;
  e.receive_timeout = std::chrono::milliseconds(c.timeout_ms);
  return e;
}

ChannelKind transport_of(const Common& c) { return *channel_kind_from_string(c.transport); }

std::optional<Endpoint> endpoint_of(const Common& c) {
  if (c.endpoint.empty()) return std::nullopt;
  return Endpoint::parse(c.endpoint);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::invalid_config, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cmd_validate(const std::string& kind_name, const std::string& value, const Common& c) {
  auto kind = pattern_kind_from_string(kind_name);
  if (!kind) {
    std::cerr << "unknown token kind '" << kind_name << "' (userdomain, ipv4, ipv6, domain)\n";
    return kUsage;
  }
  bool ok = validate_name(*kind, value, c.strict);
  std::cout << (ok ? "accept" : "reject") << "  " << kind_name << "  "
            << (c.strict ? "strict" : validation_pattern(*kind).pattern) << "\n";
  return ok ? kOk : kFailure;
}

// Fills value-less bindings so a term can be encoded without a protocol run.
KeyRing complete_symbols(SymbolTable& table, const CryptoProvider& crypto) {
  KeyRing ring;
  SymbolTable filled;
  for (const auto& [id, b] : table.entries()) {
    std::optional<Term> value = b.value;
    SecretBytes priv;
    auto key = [&](Bytes bytes) { return make_key(KeyMaterial{std::move(bytes), KeyEncoding::base64Binary, id}); };
    if (!value) {
      switch (b.sort) {
        case Sort::key: value = key(crypto.random_bytes(crypto.sk_key_length())); break;
        case Sort::public_key:
        case Sort::signing_key: {
          KeyPair kp = b.sort == Sort::public_key ? crypto.pk_generate() : crypto.sig_generate();
          value = key(kp.public_part);
          priv = kp.private_part;
          break;
        }
        case Sort::random_nonce: value = make_nonce(RandomNonce{crypto.random_bytes(16)}); break;
        case Sort::timestamp:
          value = make_nonce(
              Timestamp{std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now())});
          break;
        default: throw Error(Errc::unbound_identifier, id + " needs a value");
      }
    }
    if (b.sort == Sort::key) ring.add({id, KeyUse::symmetric, *value, {}, std::nullopt});
    if (b.sort == Sort::public_key) ring.add({id, KeyUse::public_encrypt, *value, priv, std::nullopt});
    if (b.sort == Sort::signing_key) ring.add({id, KeyUse::signing, *value, priv, std::nullopt});
    filled.bind(id, b.sort, value);
  }
  table = std::move(filled);
  return ring;
}

int cmd_encode(const std::string& text, const std::string& symbols_path, const std::string& message_id,
               const Common& c) {
  CryptoProvider crypto = make_crypto(c);
  SymbolTable table = symbols_path.empty() ? SymbolTable{} : SymbolTable::parse(read_file(symbols_path));
  KeyRing ring = complete_symbols(table, crypto);
  Term t = parse_term(text, table);
  CodecOptions codec;
  codec.strict = c.strict;
  if (is_leaf(t) && !t.is<DataTerm>()) {
    std::cout << encode_token(t, codec).xml << "\n";
    return kOk;
  }
  EnvelopeContext ctx{&crypto, &ring, {}};
  EnvelopeOptions options;
  options.codec = codec;
  if (!message_id.empty()) options.message_id = message_id;
  std::cout << serialize(build_envelope(t, ctx, options), codec) << "\n";
  return kOk;
}

int cmd_run(const std::string& name, bool dump_xml, const Common& c) {
  const ProtocolSpec& spec = find_protocol(name);
  CryptoProvider crypto = make_crypto(c);
  auto channel = make_channel(transport_of(c), endpoint_of(c));
  RunOptions options;
  options.engine = engine_options(c);
  auto print = [&](const std::vector<TranscriptEntry>& transcript) {
    for (const auto& e : transcript) {
      std::cout << e.step << ". " << e.sender << " -> " << e.receiver << " : " << e.notation << "  ("
                << e.envelope_xml.size() << " octets)\n";
      if (dump_xml) std::cout << e.envelope_xml << "\n";
    }
  };
  try {
    World world = world_for(spec, *channel, crypto);
    RunResult r = run_protocol(spec, *channel, world, crypto, options);
    print(r.transcript);
    std::cout << "completed " << spec.name << " over " << to_string(channel->kind()) << "\n\n"
              << render_report(r.report, *output_format_from_string(c.format));
  } catch (const RunError& e) {
    print(e.transcript());
    std::cerr << "aborted at step " << e.step() << ": " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

int cmd_bench_micro(int iterations, int warmup, const std::vector<std::size_t>& sizes, const Common& c) {
  MicroConfig config;
  config.iterations = iterations;
  config.warmup = warmup;
  if (!sizes.empty()) config.sizes = sizes;
  config.validate();
  CryptoProvider crypto = make_crypto(c);
  if (!pin_to_single_cpu()) std::cerr << "warning: could not pin to one CPU\n";
  std::cout << bench_micro(config, crypto).render(*output_format_from_string(c.format));
  return kOk;
}

int cmd_bench_protocol(const std::vector<std::string>& names, int iterations, int warmup, const Common& c) {
  CryptoProvider crypto = make_crypto(c);
  std::vector<std::string> todo = names;
  if (todo.empty() || (todo.size() == 1 && todo[0] == "all")) {
    todo.clear();
    for (const auto& p : register_builtin_protocols()) todo.push_back(p.name);
  }
  std::vector<ProtocolBenchConfig> configs;
  for (const auto& n : todo) {
    ProtocolBenchConfig config;
    config.protocol = n;
    config.iterations = iterations;
    config.warmup = warmup;
    config.transport = transport_of(c);
    config.endpoint = endpoint_of(c);
    config.engine = engine_options(c);
    config.validate();
    configs.push_back(std::move(config));
  }
  if (!pin_to_single_cpu()) std::cerr << "warning: could not pin to one CPU\n";
  OutputFormat format = *output_format_from_string(c.format);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    try {
      TimingReport report = bench_protocol(configs[i], crypto);
      if (format == OutputFormat::table) std::cout << (i ? "\n" : "") << report.protocol << "\n";
      std::cout << render_report(report, format);
    } catch (const RunError& e) {
      std::cerr << configs[i].protocol << " aborted at step " << e.step() << ": " << e.what() << "\n";
      return kFailure;
    }
  }
  return kOk;
}

int cmd_serve(const Common& c) {
  Endpoint ep = c.endpoint.empty() ? Endpoint{"127.0.0.1", 8080} : Endpoint::parse(c.endpoint);
  ChannelKind kind = transport_of(c);
  if (kind == ChannelKind::loopback) {
    std::cerr << "serve needs --transport http or tcp\n";
    return kUsage;
  }
  CryptoProvider crypto = make_crypto(c);
  ResponderHost host(crypto, engine_options(c));
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  auto server = kind == ChannelKind::tcp ? start_tcp_server(host, ep.host, ep.port)
                                         : start_http_server(host, ep.host, ep.port);
  std::cout << "serving " << to_string(kind) << " on " << ep.host << ":" << server->port() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server->stop();
  return kOk;
}

int cmd_list() {
  for (const auto& p : register_builtin_protocols()) {
    std::cout << p.name << "  roles:";
    for (const auto& r : p.roles) std::cout << " " << r;
    std::cout << "  steps: " << p.steps.size() << "  rows: " << p.rows.size() << "\n";
    for (const auto& s : p.steps)
      std::cout << "  " << s.number << ". " << s.sender << " -> " << s.receiver << " : " << s.template_text << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WS-Security token extensions: encoding, protocol runs and benchmarks"};
  app.require_subcommand(1);
  Common common;

  auto add_suite = [&](CLI::App* sub) {
    sub->add_option("--suite", common.suite, "algorithm suite")->check(CLI::IsMember({"default", "strong"}));
  };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", common.format, "output format")->check(CLI::IsMember({"table", "csv", "json"}));
  };
  auto add_transport = [&](CLI::App* sub) {
    sub->add_option("--transport", common.transport, "loopback, tcp or http")
        ->check(CLI::IsMember({"loopback", "tcp", "http"}));
    sub->add_option("--endpoint", common.endpoint, "host:port");
    sub->add_option("--timeout", common.timeout_ms, "receive timeout in ms")->check(CLI::PositiveNumber);
  };

  std::string kind, value, term, symbols, message_id, protocol;
  std::vector<std::string> protocols;
  bool dump_xml = false;
  int iterations = 100, warmup = 10;
  std::vector<std::size_t> sizes;

  auto* validate = app.add_subcommand("validate", "check a name against its token pattern");
  validate->add_option("kind", kind, "userdomain, ipv4, ipv6 or domain")->required();
  validate->add_option("value", value)->required();
  validate->add_flag("--strict", common.strict, "RFC checks instead of the schema patterns");

  auto* encode = app.add_subcommand("encode", "encode a term as a token or an envelope");
  encode->add_option("term", term, "term notation, e.g. A,{Na}sk(Kab)")->required();
  encode->add_option("--symbols", symbols, "symbol table file");
  encode->add_option("--message-id", message_id, "fixed envelope id");
  encode->add_flag("--strict", common.strict);
  add_suite(encode);

  auto* run = app.add_subcommand("run", "run a protocol and print its transcript");
  run->add_option("protocol", protocol)->required();
  run->add_flag("--dump-xml", dump_xml, "print full envelopes");
  run->add_flag("--strict", common.strict);
  add_transport(run);
  add_suite(run);
  add_format(run);

  auto* micro = app.add_subcommand("bench-micro", "plain vs sk and sk vs pk message construction");
  micro->add_option("--iterations", iterations)->check(CLI::PositiveNumber);
  micro->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
  micro->add_option("--sizes", sizes, "payload sizes in octets")->delimiter(',')->check(CLI::PositiveNumber);
  add_suite(micro);
  add_format(micro);

  auto* bench = app.add_subcommand("bench-protocol", "per-role timing report of protocol runs");
  bench->add_option("protocol", protocols, "protocol names, or all");
  bench->add_option("--iterations", iterations)->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
  bench->add_flag("--strict", common.strict);
  add_transport(bench);
  add_suite(bench);
  add_format(bench);

  auto* serve = app.add_subcommand("serve", "host every non-initiator role");
  add_transport(serve);
  add_suite(serve);
  serve->add_flag("--strict", common.strict);

  auto* list = app.add_subcommand("list-protocols", "show the builtin protocols");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (common.transport.empty()) common.transport = serve->parsed() ? "http" : "loopback";

  try {
    if (validate->parsed()) return cmd_validate(kind, value, common);
    if (encode->parsed()) return cmd_encode(term, symbols, message_id, common);
    if (run->parsed()) return cmd_run(protocol, dump_xml, common);
    if (micro->parsed()) return cmd_bench_micro(iterations, warmup, sizes, common);
    if (bench->parsed()) return cmd_bench_protocol(protocols, iterations, warmup, common);
    if (serve->parsed()) return cmd_serve(common);
    if (list->parsed()) return cmd_list();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::invalid_config ? kUsage : kFailure;
  }
  return kUsage;
}
