#include "wsext/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "wsext/token_codec.hpp"
#include "wsext/xml.hpp"

namespace wsext {

namespace {

constexpr std::string_view kSoapContentType = "application/soap+xml; charset=utf-8";
constexpr std::string_view kProvisionSession = "!provision";
constexpr std::uint32_t kMaxField = 64u << 20;

}  // namespace

std::string_view to_string(ChannelKind k) noexcept {
  switch (k) {
    case ChannelKind::loopback: return "loopback";
    case ChannelKind::tcp: return "tcp";
    case ChannelKind::http_post: return "http";
  }
  return "?";
}

std::optional<ChannelKind> channel_kind_from_string(std::string_view s) noexcept {
  if (s == "loopback") return ChannelKind::loopback;
  if (s == "tcp") return ChannelKind::tcp;
  if (s == "http" || s == "http_post") return ChannelKind::http_post;
  return std::nullopt;
}

// ---- Faults ----

std::string soap_fault(Errc code, std::string_view detail) {
  std::string out;
  xml::open_tag(out, "soap:Envelope", {{"xmlns:soap", std::string(kSoapNamespace)}, {"xmlns:wsext", "urn:wsext:fault"}});
  xml::open_tag(out, "soap:Body");
  xml::open_tag(out, "soap:Fault");
  xml::open_tag(out, "soap:Code");
  xml::text_element(out, "soap:Value", "soap:Sender");
  xml::open_tag(out, "soap:Subcode");
  xml::text_element(out, "soap:Value", "wsext:" + std::string(to_string(code)));
  xml::close_tag(out, "soap:Subcode");
  xml::close_tag(out, "soap:Code");
  xml::open_tag(out, "soap:Reason");
  xml::open_tag(out, "soap:Text", {{"xml:lang", "en"}});
  out += xml::escape_text(detail);
  xml::close_tag(out, "soap:Text");
  xml::close_tag(out, "soap:Reason");
  xml::close_tag(out, "soap:Fault");
  xml::close_tag(out, "soap:Body");
  xml::close_tag(out, "soap:Envelope");
  return out;
}

std::optional<Error> parse_soap_fault(std::string_view doc) {
  xml::Element root;
  try {
    root = xml::parse(doc);
  } catch (const Error&) {
    return std::nullopt;
  }
  const xml::Element* body = root.child("soap:Body");
  const xml::Element* fault = body ? body->child("soap:Fault") : nullptr;
  if (!fault) return std::nullopt;
  Errc code = Errc::transport_error;
  const xml::Element* c = fault->child("soap:Code");
  const xml::Element* sub = c ? c->child("soap:Subcode") : nullptr;
  const xml::Element* value = sub ? sub->child("soap:Value") : nullptr;
  if (value) {
    std::string_view name = value->text;
    if (auto colon = name.find(':'); colon != std::string_view::npos) name.remove_prefix(colon + 1);
    if (auto e = errc_from_string(name)) code = *e;
  }
  std::string detail;
  const xml::Element* reason = fault->child("soap:Reason");
  if (const xml::Element* text = reason ? reason->child("soap:Text") : nullptr) detail = text->text;
  std::string prefix = std::string(to_string(code)) + ": ";
  if (detail.starts_with(prefix)) detail.erase(0, prefix.size());
  return Error(code, detail);
}

// ---- Loopback ----

void LoopbackChannel::send(const Frame& frame) {
  auto t0 = std::chrono::steady_clock::now();
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(Errc::channel_closed, "loopback channel is closed");
    queue_.push_back(frame);
  }
  cv_.notify_one();
  ++counters_.messages_sent;
  counters_.bytes_sent += frame.envelope.size();
  counters_.last_send_latency = std::chrono::steady_clock::now() - t0;
}

Frame LoopbackChannel::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; }))
    throw Error(Errc::timeout, "no message within " + std::to_string(timeout.count()) + " ms");
  if (queue_.empty()) throw Error(Errc::channel_closed, "loopback channel is closed");
  Frame f = std::move(queue_.front());
  queue_.pop_front();
  ++counters_.messages_received;
  counters_.bytes_received += f.envelope.size();
  return f;
}

void LoopbackChannel::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

// ---- Reply encodings ----

std::string encode_timings(const std::vector<StepTiming>& timings) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : timings)
    j.push_back({{"role", t.role}, {"step", t.step}, {"construction", t.construction}, {"ns", t.nanoseconds}});
  return j.dump();
}

std::vector<StepTiming> decode_timings(std::string_view text) {
  std::vector<StepTiming> out;
  if (text.empty()) return out;
  try {
    for (const auto& e : nlohmann::json::parse(text))
      out.push_back({e.at("role").get<std::string>(), e.at("step").get<int>(), e.at("construction").get<bool>(),
                     e.at("ns").get<std::int64_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::transport_error, std::string("timing report: ") + e.what());
  }
  return out;
}

std::string encode_goals(const std::map<std::string, std::map<std::string, std::string>>& goals) {
  return nlohmann::json(goals).dump();
}

std::map<std::string, std::map<std::string, std::string>> decode_goals(std::string_view text) {
  if (text.empty()) return {};
  try {
    return nlohmann::json::parse(text).get<std::map<std::string, std::map<std::string, std::string>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::transport_error, std::string("goal report: ") + e.what());
  }
}

// ---- Responder host ----

ResponderHost::ResponderHost(const CryptoProvider& crypto, EngineOptions options)
    : crypto_(crypto), options_(std::move(options)) {}

const World& ResponderHost::world(const ProtocolSpec& spec) {
  std::lock_guard lock(mu_);
  auto it = worlds_.find(spec.name);
  if (it == worlds_.end()) it = worlds_.emplace(spec.name, World::generate(spec, crypto_)).first;
  return it->second;
}

std::string ResponderHost::provision(const std::string& protocol) {
  return world(find_protocol(protocol)).to_json();
}

std::size_t ResponderHost::open_sessions() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

ResponderHost::Reply ResponderHost::handle(const Frame& frame) {
  const ProtocolSpec& spec = find_protocol(frame.protocol);
  if (frame.session.empty()) throw Error(Errc::protocol_violation, "missing session id");
  const World& w = world(spec);

  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(frame.session);
    if (it != sessions_.end()) {
      s = it->second;
    } else {
      s = std::make_shared<Session>();
      s->spec = &spec;
      for (const auto& r : spec.roles)
        if (r != spec.initiator()) s->roles.emplace(r, RoleState(spec, r, w));
      sessions_.emplace(frame.session, s);
    }
  }
  auto drop = [&] {
    std::lock_guard lock(mu_);
    sessions_.erase(frame.session);
  };

  std::lock_guard session_lock(s->mu);
  Reply reply;
  try {
    if (s->spec != &spec) throw Error(Errc::protocol_violation, "session belongs to " + s->spec->name);
    if (s->next >= spec.steps.size()) throw Error(Errc::protocol_violation, "session has finished");
    const Step& first = spec.steps[s->next];
    if (first.sender != spec.initiator())
      throw Error(Errc::not_your_turn, "step " + std::to_string(first.number) + " is not the initiator's");
    RoleState& receiver = s->roles.at(first.receiver);
    step_process(receiver, spec, frame.envelope, crypto_, options_);
    reply.timings.push_back(receiver.timings().back());
    ++s->next;
    while (s->next < spec.steps.size()) {
      const Step& st = spec.steps[s->next];
      if (st.sender == spec.initiator()) break;
      RoleState& sender = s->roles.at(st.sender);
      Constructed c = step_construct(sender, spec, crypto_, options_);
      reply.timings.push_back(sender.timings().back());
      ++s->next;
      if (st.receiver == spec.initiator()) {
        reply.envelope = std::move(c.xml);
        break;
      }
      RoleState& next = s->roles.at(st.receiver);
      step_process(next, spec, c.xml, crypto_, options_);
      reply.timings.push_back(next.timings().back());
    }
  } catch (const Error&) {
    drop();
    throw;
  }
  if (s->next >= spec.steps.size()) {
    for (const auto& [role, st] : s->roles) reply.goals[role] = goal_digests(st, spec, crypto_);
    drop();
  }
  return reply;
}

// ---- Endpoints and remote channels ----

Endpoint Endpoint::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw Error(Errc::invalid_config, "endpoint must be host:port");
  std::string host(text.substr(0, colon));
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(std::string(text.substr(colon + 1)), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw Error(Errc::invalid_config, "bad port in '" + std::string(text) + "'");
  }
  if (port < 1 || port > 65535) throw Error(Errc::invalid_config, "port out of range");
  return {host, port};
}

void RemoteChannel::send(const Frame& frame) {
  if (closed_) throw Error(Errc::channel_closed, "channel is closed");
  auto t0 = std::chrono::steady_clock::now();
  Response r = exchange(frame);
  counters_.last_send_latency = std::chrono::steady_clock::now() - t0;
  ++counters_.messages_sent;
  counters_.bytes_sent += frame.envelope.size();
  if (r.status != 200) {
    if (auto fault = parse_soap_fault(r.envelope)) throw *fault;
    throw Error(Errc::transport_error, "status " + std::to_string(r.status));
  }
  for (auto& t : decode_timings(r.timings)) report_.timings.push_back(std::move(t));
  for (auto& [role, g] : decode_goals(r.goals)) report_.goals[role] = std::move(g);
  if (!r.envelope.empty()) {
    ++counters_.messages_received;
    counters_.bytes_received += r.envelope.size();
    inbox_.push_back({frame.protocol, frame.session, std::move(r.envelope)});
  }
}

Frame RemoteChannel::receive(std::chrono::milliseconds timeout) {
  if (closed_) throw Error(Errc::channel_closed, "channel is closed");
  if (inbox_.empty())
    throw Error(Errc::timeout, "no reply pending within " + std::to_string(timeout.count()) + " ms");
  Frame f = std::move(inbox_.front());
  inbox_.pop_front();
  return f;
}

RemoteReport RemoteChannel::drain_remote() { return std::exchange(report_, {}); }

// ---- HTTP ----

namespace {

class HttpServer : public Server {
 public:
  HttpServer(ResponderHost& host, const std::string& address, int port) {
    server_.Post("/", [&host](const httplib::Request& req, httplib::Response& res) {
      Frame f{req.get_header_value("X-WSExt-Protocol"), req.get_header_value("X-WSExt-Session"), req.body};
      try {
        auto reply = host.handle(f);
        res.set_header("X-WSExt-Timing", encode_timings(reply.timings));
        res.set_header("X-WSExt-Goals", encode_goals(reply.goals));
        res.status = 200;
        res.set_content(reply.envelope, std::string(kSoapContentType));
      } catch (const Error& e) {
        res.status = 500;
        res.set_content(soap_fault(e.code(), e.detail()), std::string(kSoapContentType));
      }
    });
    server_.Get(R"(/provision/(.+))", [&host](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(host.provision(req.matches[1]), "application/json");
      } catch (const Error& e) {
        res.status = 404;
        res.set_content(soap_fault(e.code(), e.detail()), std::string(kSoapContentType));
      }
    });
    port_ = port == 0 ? server_.bind_to_any_port(address) : (server_.bind_to_port(address, port) ? port : -1);
    if (port_ <= 0) throw Error(Errc::bind_error, "cannot bind " + address + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~HttpServer() override { stop(); }

  int port() const noexcept override { return port_; }
  void stop() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace

std::unique_ptr<Server> start_http_server(ResponderHost& host, const std::string& address, int port) {
  return std::make_unique<HttpServer>(host, address, port);
}

struct HttpChannel::Impl {
  explicit Impl(const Endpoint& e) : client(e.host, e.port) {
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    client.set_keep_alive(true);
  }
  httplib::Client client;
};

HttpChannel::HttpChannel(Endpoint endpoint) : impl_(std::make_unique<Impl>(endpoint)) {}
HttpChannel::~HttpChannel() = default;

RemoteChannel::Response HttpChannel::exchange(const Frame& frame) {
  httplib::Headers headers{{"X-WSExt-Protocol", frame.protocol}, {"X-WSExt-Session", frame.session}};
  auto res = impl_->client.Post("/", headers, frame.envelope, std::string(kSoapContentType));
  if (!res) throw Error(Errc::timeout, "no response from endpoint: " + httplib::to_string(res.error()));
  return {res->status, res->body, res->get_header_value("X-WSExt-Timing"), res->get_header_value("X-WSExt-Goals")};
}

std::optional<std::string> HttpChannel::provision(const std::string& protocol) {
  auto res = impl_->client.Get("/provision/" + protocol);
  if (!res) throw Error(Errc::timeout, "no response from endpoint: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    if (auto fault = parse_soap_fault(res->body)) throw *fault;
    throw Error(Errc::transport_error, "provisioning returned " + std::to_string(res->status));
  }
  return res->body;
}

// ---- TCP ----

namespace {

bool write_all(int fd, const void* data, std::size_t n) {
  auto* p = static_cast<const char*>(data);
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, void* data, std::size_t n) {
  auto* p = static_cast<char*>(data);
  while (n > 0) {
    ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

bool write_fields(int fd, const std::vector<std::string>& fields) {
  std::string buf;
  auto put = [&](std::uint32_t v) {
    std::uint32_t be = htonl(v);
    buf.append(reinterpret_cast<const char*>(&be), 4);
  };
  put(static_cast<std::uint32_t>(fields.size()));
  for (const auto& f : fields) {
    put(static_cast<std::uint32_t>(f.size()));
    buf += f;
  }
  return write_all(fd, buf.data(), buf.size());
}

std::optional<std::vector<std::string>> read_fields(int fd) {
  auto get = [&](std::uint32_t& v) {
    std::uint32_t be = 0;
    if (!read_all(fd, &be, 4)) return false;
    v = ntohl(be);
    return true;
  };
  std::uint32_t count = 0;
  if (!get(count) || count > 16) return std::nullopt;
  std::vector<std::string> out(count);
  for (auto& f : out) {
    std::uint32_t len = 0;
    if (!get(len) || len > kMaxField) return std::nullopt;
    f.resize(len);
    if (len && !read_all(fd, f.data(), len)) return std::nullopt;
  }
  return out;
}

int open_socket(const std::string& host, int port, bool listen_side) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (listen_side) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    if (listen_side) {
      ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) break;
    } else {
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    }
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  return fd;
}

class TcpServer : public Server {
 public:
  TcpServer(ResponderHost& host, const std::string& address, int port) : host_(host) {
    listen_fd_ = open_socket(address, port, true);
    if (listen_fd_ < 0)
      throw Error(Errc::bind_error, "cannot bind " + address + ":" + std::to_string(port) + ": " + std::strerror(errno));
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    port_ = ntohs(ss.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }
  ~TcpServer() override { stop(); }

  int port() const noexcept override { return port_; }

  void stop() override {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(mu_);
      for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
      workers = std::move(workers_);
    }
    for (auto& t : workers) t.join();
  }

 private:
  void accept_loop() {
    while (!stopping_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        return;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      std::lock_guard lock(mu_);
      if (stopping_) {
        ::close(fd);
        return;
      }
      clients_.insert(fd);
      workers_.emplace_back([this, fd] { serve(fd); });
    }
  }

  void serve(int fd) {
    while (auto req = read_fields(fd)) {
      std::vector<std::string> out;
      if (req->size() != 3) {
        out = {"fault", soap_fault(Errc::transport_error, "request needs three fields"), "", ""};
      } else if ((*req)[1] == kProvisionSession) {
        try {
          out = {"ok", host_.provision((*req)[0]), "", ""};
        } catch (const Error& e) {
          out = {"fault", soap_fault(e.code(), e.detail()), "", ""};
        }
      } else {
        try {
          auto reply = host_.handle({(*req)[0], (*req)[1], (*req)[2]});
          out = {"ok", std::move(reply.envelope), encode_timings(reply.timings), encode_goals(reply.goals)};
        } catch (const Error& e) {
          out = {"fault", soap_fault(e.code(), e.detail()), "", ""};
        }
      }
      if (!write_fields(fd, out)) break;
    }
    std::lock_guard lock(mu_);
    clients_.erase(fd);
    ::close(fd);
  }

  ResponderHost& host_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::set<int> clients_;
  std::vector<std::thread> workers_;
};

}  // namespace

std::unique_ptr<Server> start_tcp_server(ResponderHost& host, const std::string& address, int port) {
  return std::make_unique<TcpServer>(host, address, port);
}

TcpChannel::TcpChannel(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<std::string> TcpChannel::call(const std::vector<std::string>& fields) {
  if (fd_ < 0) {
    fd_ = open_socket(endpoint_.host, endpoint_.port, false);
    if (fd_ < 0)
      throw Error(Errc::timeout, "no response from endpoint " + endpoint_.host + ":" + std::to_string(endpoint_.port));
  }
  std::optional<std::vector<std::string>> reply;
  if (write_fields(fd_, fields)) reply = read_fields(fd_);
  if (!reply || reply->size() != 4) {
    ::close(fd_);
    fd_ = -1;
    throw Error(Errc::transport_error, "connection lost");
  }
  return std::move(*reply);
}

RemoteChannel::Response TcpChannel::exchange(const Frame& frame) {
  auto r = call({frame.protocol, frame.session, frame.envelope});
  return {r[0] == "ok" ? 200 : 500, std::move(r[1]), std::move(r[2]), std::move(r[3])};
}

std::optional<std::string> TcpChannel::provision(const std::string& protocol) {
  auto r = call({protocol, std::string(kProvisionSession), ""});
  if (r[0] != "ok") {
    if (auto fault = parse_soap_fault(r[1])) throw *fault;
    throw Error(Errc::transport_error, "provisioning failed");
  }
  return std::move(r[1]);
}

std::unique_ptr<Channel> make_channel(ChannelKind kind, const std::optional<Endpoint>& endpoint) {
  if (kind == ChannelKind::loopback) return std::make_unique<LoopbackChannel>();
  if (!endpoint) throw Error(Errc::invalid_config, std::string(to_string(kind)) + " transport needs an endpoint");
  if (kind == ChannelKind::tcp) return std::make_unique<TcpChannel>(*endpoint);
  return std::make_unique<HttpChannel>(*endpoint);
}

}  // namespace wsext
