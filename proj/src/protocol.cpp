#include "wsext/protocol.hpp"

#include <algorithm>
#include <sstream>

#include "builtin_protocols.hpp"
#include "json.hpp"
#include "wsext/token_codec.hpp"
#include "wsext/xml.hpp"

namespace wsext {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::invalid_protocol, what); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

void collect_vars(const Term& t, std::vector<std::string>& out) {
  if (auto* v = t.as<VarTerm>()) {
    out.push_back(v->id);
  } else if (auto* p = t.as<PairTerm>()) {
    collect_vars(p->left, out);
    collect_vars(p->right, out);
  } else if (auto* e = t.as<EncTerm>()) {
    collect_vars(e->payload, out);
    if (e->key_arg) collect_vars(*e->key_arg, out);
  }
}

std::vector<std::string> vars_of(const Term& t) {
  std::vector<std::string> out;
  collect_vars(t, out);
  return out;
}

const std::string& key_id(const EncTerm& e) { return e.key_arg->as<VarTerm>()->id; }

// ---- Static knowledge flow ----

class Simulation {
 public:
  explicit Simulation(ProtocolSpec& spec) : spec_(spec) {
    for (const auto& r : spec.roles) {
      known_[r] = spec.initial_knowledge[r];
      owned_[r] = spec.owns[r];
    }
  }

  void run() {
    for (auto& step : spec_.steps) {
      const auto& s = step.sender;
      for (const auto& id : step.fresh) {
        Sort sort = spec_.sort_of(id);
        if (is_name_sort(sort)) invalid("step " + std::to_string(step.number) + ": names cannot be fresh (" + id + ")");
        if (known_[s].count(id)) invalid("step " + std::to_string(step.number) + ": " + s + " already knows " + id);
        known_[s].insert(id);
        if (sort == Sort::public_key || sort == Sort::signing_key || sort == Sort::dh_key) owned_[s].insert(id);
      }
      for (const auto& d : step.derive)
        if (d.role == s) derive(d, step.number);
      if (auto missing = missing_for(step.message, s))
        invalid(s + " cannot build step " + std::to_string(step.number) + ": " + *missing);
      learn(step);
      for (const auto& d : step.derive)
        if (d.role == step.receiver) derive(d, step.number);
    }
    for (const auto& g : spec_.goals)
      for (const auto& r : g.roles)
        if (!known_[r].count(g.id)) invalid("goal " + g.id + " is never known by " + r);
  }

 private:
  void derive(const Derivation& d, int step) {
    auto where = "step " + std::to_string(step) + ": ";
    if (spec_.sort_of(d.own) != Sort::dh_key || spec_.sort_of(d.peer) != Sort::dh_key)
      invalid(where + "dh() takes two dhkey identifiers");
    if (spec_.sort_of(d.target) != Sort::key) invalid(where + d.target + " must be a key");
    if (!owned_[d.role].count(d.own)) invalid(where + d.role + " holds no private half of " + d.own);
    if (!known_[d.role].count(d.peer)) invalid(where + d.role + " does not know " + d.peer);
    if (known_[d.role].count(d.target)) invalid(where + d.role + " already knows " + d.target);
    known_[d.role].insert(d.target);
  }

  std::optional<std::string> missing_for(const Term& t, const std::string& role) {
    if (auto* v = t.as<VarTerm>())
      return known_[role].count(v->id) ? std::nullopt : std::optional<std::string>("does not know " + v->id);
    if (auto* p = t.as<PairTerm>()) {
      if (auto m = missing_for(p->left, role)) return m;
      return missing_for(p->right, role);
    }
    if (auto* e = t.as<EncTerm>()) {
      if (opaque_[role].count(print_term(t))) return std::nullopt;
      if (auto m = missing_for(e->payload, role)) return m;
      if (e->key_arg) {
        if (auto m = missing_for(*e->key_arg, role)) return m;
        if (e->func == FuncName::pk && spec_.sort_of(key_id(*e)) == Sort::signing_key &&
            !owned_[role].count(key_id(*e)))
          return "cannot sign with " + key_id(*e) + " (no private half)";
      }
      return std::nullopt;
    }
    return std::nullopt;
  }

  bool all_known(const Term& t, const std::string& role) {
    for (const auto& id : vars_of(t))
      if (!known_[role].count(id)) return false;
    return true;
  }

  bool can_open(const EncTerm& e, const std::string& role) {
    switch (e.func) {
      case FuncName::h: return all_known(e.payload, role);
      case FuncName::hmac: return known_[role].count(key_id(e)) && all_known(e.payload, role);
      case FuncName::sk: return known_[role].count(key_id(e)) != 0;
      case FuncName::pk:
        if (spec_.sort_of(key_id(e)) == Sort::signing_key) return known_[role].count(key_id(e)) != 0;
        return owned_[role].count(key_id(e)) != 0;
    }
    return false;
  }

  void visit(const Term& t, const std::string& role, Step& step, std::vector<Term>& pending) {
    if (auto* v = t.as<VarTerm>()) {
      if (known_[role].count(v->id)) {
        step.checks.push_back({is_nonce_sort(v->sort) ? CheckKind::nonce_echo : CheckKind::echo, v->id});
      } else {
        known_[role].insert(v->id);
        if (v->sort == Sort::timestamp) step.checks.push_back({CheckKind::timestamp_freshness, v->id});
      }
    } else if (auto* p = t.as<PairTerm>()) {
      visit(p->left, role, step, pending);
      visit(p->right, role, step, pending);
    } else if (auto* e = t.as<EncTerm>()) {
      if (!can_open(*e, role)) {
        pending.push_back(t);
        return;
      }
      if (e->func == FuncName::h || e->func == FuncName::hmac) {
        step.checks.push_back({CheckKind::digest, print_term(t)});
        return;
      }
      bool sig = e->func == FuncName::pk && spec_.sort_of(key_id(*e)) == Sort::signing_key;
      step.checks.push_back({sig ? CheckKind::signature : CheckKind::decryptability, print_term(t)});
      visit(e->payload, role, step, pending);
    }
  }

  void learn(Step& step) {
    const auto& r = step.receiver;
    std::vector<Term> pending;
    visit(step.message, r, step, pending);
    bool progress = true;
    while (progress) {
      progress = false;
      std::vector<Term> still;
      for (const auto& t : pending) {
        if (can_open(*t.as<EncTerm>(), r)) {
          visit(t, r, step, still);
          progress = true;
        } else {
          still.push_back(t);
        }
      }
      pending = std::move(still);
    }
    for (const auto& t : pending) opaque_[r].insert(print_term(t));
  }

  ProtocolSpec& spec_;
  std::map<std::string, std::set<std::string>> known_;
  std::map<std::string, std::set<std::string>> owned_;
  std::map<std::string, std::set<std::string>> opaque_;
};

void check_key_args(const Term& t, const ProtocolSpec& spec, int step) {
  if (auto* p = t.as<PairTerm>()) {
    check_key_args(p->left, spec, step);
    check_key_args(p->right, spec, step);
    return;
  }
  auto* e = t.as<EncTerm>();
  if (!e) return;
  auto where = "step " + std::to_string(step) + ": ";
  if (e->key_arg) {
    auto* v = e->key_arg->as<VarTerm>();
    if (!v) invalid(where + "key arguments must be identifiers");
    bool ok = e->func == FuncName::pk ? (v->sort == Sort::public_key || v->sort == Sort::signing_key)
                                      : v->sort == Sort::key;
    if (!ok) invalid(where + std::string(to_string(e->func)) + "(" + v->id + ") has a " + std::string(to_string(v->sort)));
  }
  if (e->func == FuncName::h || e->func == FuncName::hmac) {
    for (const auto& item : flatten(e->payload))
      if (!item.is<VarTerm>()) invalid(where + "digest payloads must be identifiers");
  }
  check_key_args(e->payload, spec, step);
}

// ---- Runtime helpers ----

Term relabel(const Term& value, const std::string& id) {
  if (auto* k = value.as<KeyTerm>()) {
    if (k->key.label == id) return value;
    KeyMaterial m = k->key;
    m.label = id;
    return make_key(std::move(m));
  }
  return value;
}

bool sort_accepts(Sort sort, const Term& leaf) {
  if (is_key_sort(sort)) return leaf.is<KeyTerm>();
  auto s = sort_of(leaf);
  return s && *s == sort;
}

std::string leaf_canonical(const Term& t, const CodecOptions& codec) {
  if (auto* d = t.as<DataTerm>()) return user_data_xml(d->data);
  return encode_token(t, codec).xml;
}

UtcMillis now_ms() { return std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now()); }

using Clock = std::chrono::steady_clock;

std::int64_t median(std::vector<std::int64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// Accepts up to two decimals ("15", "17.6", "0.83").
std::optional<std::int64_t> parse_cms(std::string_view s) {
  bool neg = !s.empty() && s.front() == '-';
  if (neg) s.remove_prefix(1);
  auto dot = s.find('.');
  std::string_view whole = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() || frac.size() > 2 || (dot != std::string_view::npos && frac.empty())) return std::nullopt;
  std::int64_t v = 0;
  for (char c : whole) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  for (std::size_t i = 0; i < 2; ++i) {
    char c = i < frac.size() ? frac[i] : '0';
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return neg ? -v : v;
}

}  // namespace

std::string_view to_string(CheckKind k) noexcept {
  switch (k) {
    case CheckKind::echo: return "echo";
    case CheckKind::nonce_echo: return "nonce-echo";
    case CheckKind::timestamp_freshness: return "timestamp-freshness";
    case CheckKind::signature: return "signature";
    case CheckKind::decryptability: return "decryptability";
    case CheckKind::digest: return "digest";
  }
  return "?";
}

Sort ProtocolSpec::sort_of(std::string_view id) const {
  const Binding* b = symbols.find(id);
  if (!b) invalid("undeclared identifier " + std::string(id));
  return b->sort;
}

const Step& ProtocolSpec::step(int number) const {
  if (number < 1 || static_cast<std::size_t>(number) > steps.size())
    invalid(name + " has no step " + std::to_string(number));
  return steps[static_cast<std::size_t>(number - 1)];
}

ProtocolSpec parse_protocol(std::string_view script) {
  ProtocolSpec spec;
  spec.source = std::string(script);
  std::string symbol_lines;
  SymbolTable placeholders;
  std::istringstream in{std::string(script)};
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& what) { invalid("line " + std::to_string(line_no) + ": " + what); };
  auto role_list = [&](std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos) fail("expected 'Role : identifiers'");
    return std::pair{std::string(trim(text.substr(0, colon))), words(text.substr(colon + 1))};
  };
  auto need_role = [&](const std::string& r) {
    if (!contains(spec.roles, r)) fail("unknown role " + r);
  };
  bool symbols_done = false;
  auto finish_symbols = [&] {
    if (symbols_done) return;
    symbols_done = true;
    spec.symbols = SymbolTable::parse(symbol_lines);
    for (const auto& [id, b] : spec.symbols.entries()) placeholders.bind(id, b.sort);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto kw_end = line.find_first_of(" \t");
    std::string kw(line.substr(0, kw_end));
    std::string_view rest = kw_end == std::string_view::npos ? std::string_view{} : trim(line.substr(kw_end));

    if (kw == "protocol") {
      spec.name = std::string(rest);
    } else if (kw == "roles") {
      spec.roles = words(rest);
    } else if (kw == "symbol") {
      if (symbols_done) fail("symbols must precede knowledge and steps");
      symbol_lines += std::string(rest) + "\n";
    } else if (kw == "knows" || kw == "owns") {
      finish_symbols();
      auto [role, ids] = role_list(rest);
      need_role(role);
      for (const auto& id : ids) {
        if (!spec.symbols.find(id)) fail("undeclared identifier " + id);
        (kw == "knows" ? spec.initial_knowledge : spec.owns)[role].insert(id);
      }
    } else if (kw == "fresh") {
      if (spec.steps.empty()) fail("fresh outside a step");
      for (const auto& id : words(rest)) {
        if (!spec.symbols.find(id)) fail("undeclared identifier " + id);
        spec.steps.back().fresh.push_back(id);
      }
    } else if (kw == "derive") {
      if (spec.steps.empty()) fail("derive outside a step");
      // derive Role X = dh(a,b)
      auto eq = rest.find('=');
      if (eq == std::string_view::npos) fail("expected 'derive Role X = dh(a,b)'");
      auto lhs = words(rest.substr(0, eq));
      std::string rhs;
      for (char c : rest.substr(eq + 1))
        if (c != ' ' && c != '\t') rhs += c;
      if (lhs.size() != 2 || !rhs.starts_with("dh(") || rhs.back() != ')') fail("expected 'derive Role X = dh(a,b)'");
      auto comma = rhs.find(',');
      if (comma == std::string::npos) fail("dh() takes two arguments");
      need_role(lhs[0]);
      Derivation d{lhs[0], lhs[1], rhs.substr(3, comma - 3), rhs.substr(comma + 1, rhs.size() - comma - 2)};
      for (const auto* id : {&d.target, &d.own, &d.peer})
        if (!spec.symbols.find(*id)) fail("undeclared identifier " + *id);
      spec.steps.back().derive.push_back(std::move(d));
    } else if (kw == "goal") {
      auto [id, roles] = role_list(rest);
      if (!spec.symbols.find(id)) fail("undeclared identifier " + id);
      for (const auto& r : roles) need_role(r);
      spec.goals.push_back({id, roles});
    } else if (kw == "row") {
      auto colon = rest.find(':');
      if (colon == std::string_view::npos) fail("expected 'row label : Role [@ steps]'");
      RowSpec row;
      row.label = std::string(trim(rest.substr(0, colon)));
      auto body = rest.substr(colon + 1);
      auto at = body.find('@');
      auto role_words = words(body.substr(0, at));
      if (role_words.size() != 1) fail("a row names exactly one role");
      row.role = role_words[0];
      need_role(row.role);
      if (at != std::string_view::npos) {
        for (const auto& w : words(body.substr(at + 1))) {
          try {
            row.steps.push_back(std::stoi(w));
          } catch (const std::exception&) {
            fail("bad step number '" + w + "'");
          }
        }
      }
      spec.rows.push_back(std::move(row));
    } else if (!kw.empty() && kw.back() == '.' && std::all_of(kw.begin(), kw.end() - 1, ::isdigit) && kw.size() > 1) {
      finish_symbols();
      // n. S -> R : term
      int n = std::stoi(kw);
      if (n != static_cast<int>(spec.steps.size()) + 1) fail("steps must be numbered 1, 2, ...");
      auto arrow = rest.find("->");
      auto colon = rest.find(':');
      if (arrow == std::string_view::npos || colon == std::string_view::npos || colon < arrow)
        fail("expected 'n. Sender -> Receiver : message'");
      Step st{n, std::string(trim(rest.substr(0, arrow))), std::string(trim(rest.substr(arrow + 2, colon - arrow - 2))),
              std::string(trim(rest.substr(colon + 1))), make_var("_", Sort::user_data), {}, {}, {}};
      need_role(st.sender);
      need_role(st.receiver);
      try {
        st.message = parse_term(st.template_text, placeholders);
      } catch (const Error& e) {
        fail("step " + std::to_string(n) + ": " + std::string(e.what()));
      }
      spec.steps.push_back(std::move(st));
    } else {
      fail("unknown directive '" + kw + "'");
    }
  }
  finish_symbols();

  if (spec.name.empty()) invalid("protocol has no name");
  if (spec.roles.size() < 2) invalid(spec.name + ": at least two roles are needed");
  if (spec.steps.empty()) invalid(spec.name + ": no steps");
  if (spec.rows.empty())
    for (const auto& r : spec.roles) spec.rows.push_back({r, r, {}});
  check_executable(spec);
  // check_executable works on a copy; fill in the receiver checks here.
  Simulation sim(spec);
  for (auto& st : spec.steps) st.checks.clear();
  sim.run();
  return spec;
}

void check_executable(const ProtocolSpec& spec) {
  for (const auto& id : spec.symbols.entries()) {
    if (!is_identifier(id.first)) invalid("'" + id.first + "' is not an identifier");
  }
  std::set<std::string> seen_roles;
  for (const auto& r : spec.roles)
    if (!seen_roles.insert(r).second) invalid("role " + r + " declared twice");
  for (const auto& [role, ids] : spec.owns) {
    for (const auto& id : ids) {
      Sort s = spec.sort_of(id);
      if (s != Sort::public_key && s != Sort::signing_key && s != Sort::dh_key)
        invalid(role + " owns " + id + ", which has no private half");
      auto k = spec.initial_knowledge.find(role);
      if (k == spec.initial_knowledge.end() || !k->second.count(id)) invalid(role + " owns " + id + " without knowing it");
    }
  }
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    const auto& st = spec.steps[i];
    if (st.sender == st.receiver) invalid("step " + std::to_string(st.number) + " sends to itself");
    if (i > 0 && spec.steps[i - 1].receiver != st.sender)
      invalid("step " + std::to_string(st.number) + " is sent by " + st.sender + ", but step " +
              std::to_string(st.number - 1) + " went to " + spec.steps[i - 1].receiver);
    check_key_args(st.message, spec, st.number);
    for (const auto& d : st.derive)
      if (d.role != st.sender && d.role != st.receiver)
        invalid("step " + std::to_string(st.number) + ": " + d.role + " does not take part");
  }
  for (const auto& row : spec.rows) {
    for (int n : row.steps) {
      const Step& st = spec.step(n);
      if (st.sender != row.role && st.receiver != row.role)
        invalid("row '" + row.label + "': " + row.role + " takes no part in step " + std::to_string(n));
    }
  }
  ProtocolSpec copy = spec;
  Simulation(copy).run();
}

const std::vector<ProtocolSpec>& register_builtin_protocols() {
  static const std::vector<ProtocolSpec> kAll = [] {
    std::vector<ProtocolSpec> v;
    for (auto src : builtin_protocol_sources()) v.push_back(parse_protocol(src));
    return v;
  }();
  return kAll;
}

const ProtocolSpec& find_protocol(std::string_view name) {
  for (const auto& p : register_builtin_protocols())
    if (p.name == name) return p;
  throw Error(Errc::invalid_protocol, "no protocol named '" + std::string(name) + "'");
}

// ---- World ----

namespace {

struct Generated {
  Term value;
  std::optional<SecretBytes> secret;
};

Generated generate_value(Sort sort, const std::string& id, const CryptoProvider& crypto) {
  auto key = [&](Bytes bytes) { return make_key(KeyMaterial{std::move(bytes), KeyEncoding::base64Binary, id}); };
  switch (sort) {
    case Sort::random_nonce: return {make_nonce(RandomNonce{crypto.random_bytes(16)}), std::nullopt};
    case Sort::timestamp: return {make_nonce(Timestamp{now_ms()}), std::nullopt};
    case Sort::key: return {key(crypto.random_bytes(crypto.sk_key_length())), std::nullopt};
    case Sort::public_key: {
      KeyPair kp = crypto.pk_generate();
      return {key(kp.public_part), std::move(kp.private_part)};
    }
    case Sort::signing_key: {
      KeyPair kp = crypto.sig_generate();
      return {key(kp.public_part), std::move(kp.private_part)};
    }
    case Sort::dh_key: {
      KeyPair kp = crypto.dh_generate();
      return {key(kp.public_part), std::move(kp.private_part)};
    }
    case Sort::user_data:
      return {make_data(UserData{crypto.random_bytes(64), "application/octet-stream", false}), std::nullopt};
    default: throw Error(Errc::invalid_protocol, id + ": names need a literal value");
  }
}

}  // namespace

World World::generate(const ProtocolSpec& spec, const CryptoProvider& crypto) {
  World w;
  w.protocol = spec.name;
  std::set<std::string> needed;
  for (const auto& [role, ids] : spec.initial_knowledge) needed.insert(ids.begin(), ids.end());
  for (const auto& id : needed) {
    const Binding* b = spec.symbols.find(id);
    if (b->value) {
      w.values.emplace(id, relabel(*b->value, id));
      continue;
    }
    Generated g = generate_value(b->sort, id, crypto);
    w.values.emplace(id, g.value);
    if (g.secret) w.privates.emplace(id, std::move(*g.secret));
  }
  return w;
}

std::string World::to_json() const {
  SymbolTable table;
  for (const auto& [id, v] : values) {
    Sort s = wsext::sort_of(v).value_or(Sort::key);
    table.bind(id, s, v);
  }
  nlohmann::json j;
  j["protocol"] = protocol;
  j["values"] = table.to_text();
  nlohmann::json priv = nlohmann::json::object();
  for (const auto& [id, secret] : privates) priv[id] = base64_encode(secret.view());
  j["private"] = priv;
  return j.dump();
}

World World::from_json(std::string_view json, const ProtocolSpec& spec) {
  World w;
  try {
    auto j = nlohmann::json::parse(json);
    w.protocol = j.at("protocol").get<std::string>();
    SymbolTable table = SymbolTable::parse(j.at("values").get<std::string>());
    for (const auto& [id, b] : table.entries()) {
      if (!b.value) throw Error(Errc::invalid_config, "world value " + id + " is empty");
      w.values.emplace(id, relabel(*b.value, id));
    }
    for (const auto& [id, v] : j.at("private").items()) {
      auto bytes = base64_decode(v.get<std::string>());
      if (!bytes) throw Error(Errc::invalid_config, "private half of " + id + " is not base64");
      w.privates.emplace(id, SecretBytes(std::move(*bytes)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_config, std::string("world document: ") + e.what());
  }
  if (w.protocol != spec.name) throw Error(Errc::invalid_config, "world is for " + w.protocol + ", not " + spec.name);
  for (const auto& [role, ids] : spec.initial_knowledge)
    for (const auto& id : ids)
      if (!w.values.count(id)) throw Error(Errc::invalid_config, "world lacks " + id);
  return w;
}

// ---- Role state ----

RoleState::RoleState(const ProtocolSpec& spec, std::string role, const World& world)
    : spec_(&spec), role_(std::move(role)) {
  if (!contains(spec.roles, role_)) throw Error(Errc::invalid_protocol, spec.name + " has no role " + role_);
  auto k = spec.initial_knowledge.find(role_);
  if (k != spec.initial_knowledge.end()) {
    for (const auto& id : k->second) {
      auto it = world.values.find(id);
      if (it == world.values.end()) throw Error(Errc::missing_knowledge, "world has no value for " + id);
      knowledge_.emplace(id, relabel(it->second, id));
    }
  }
  auto o = spec.owns.find(role_);
  if (o != spec.owns.end()) {
    for (const auto& id : o->second) {
      auto it = world.privates.find(id);
      if (it == world.privates.end()) throw Error(Errc::missing_knowledge, "world has no private half of " + id);
      privates_.emplace(id, it->second);
    }
  }
  for (const auto& st : spec.steps)
    if (st.sender == role_ || st.receiver == role_) involvement_.push_back(st.number);
}

std::optional<Term> RoleState::value(std::string_view id) const {
  auto it = knowledge_.find(std::string(id));
  if (it == knowledge_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> RoleState::next_step() const {
  if (done()) return std::nullopt;
  return involvement_[cursor_];
}

bool RoleState::next_is_send() const { return !done() && spec_->step(involvement_[cursor_]).sender == role_; }

void RoleState::bind(const std::string& id, const Term& value) {
  Term v = relabel(value, id);
  auto [it, inserted] = knowledge_.emplace(id, v);
  if (!inserted && !(it->second == v)) throw Error(Errc::check_failed, "rebinding " + id + " to a different value");
}

void RoleState::bind_private(const std::string& id, SecretBytes secret) {
  auto [it, inserted] = privates_.emplace(id, std::move(secret));
  if (!inserted) throw Error(Errc::check_failed, "private half of " + id + " is already held");
}

KeyRing RoleState::key_ring() const {
  KeyRing ring;
  for (const auto& [id, value] : knowledge_) {
    Sort s = spec_->sort_of(id);
    std::optional<KeyUse> use;
    if (s == Sort::key) use = KeyUse::symmetric;
    else if (s == Sort::public_key) use = KeyUse::public_encrypt;
    else if (s == Sort::signing_key) use = KeyUse::signing;
    if (!use) continue;
    SecretBytes priv;
    if (auto it = privates_.find(id); it != privates_.end()) priv = it->second;
    ring.add(KeyEntry{id, *use, value, std::move(priv), std::nullopt});
  }
  return ring;
}

std::vector<Term> RoleState::known_terms() const {
  std::vector<Term> out;
  out.reserve(knowledge_.size());
  for (const auto& [id, v] : knowledge_) out.push_back(v);
  return out;
}

struct Engine {
  static Term instantiate(const RoleState& st, const Term& t) {
    if (auto* v = t.as<VarTerm>()) {
      auto it = st.knowledge_.find(v->id);
      if (it == st.knowledge_.end()) throw Error(Errc::missing_knowledge, st.role_ + " does not know " + v->id);
      return it->second;
    }
    if (auto* p = t.as<PairTerm>()) return pair(instantiate(st, p->left), instantiate(st, p->right));
    if (auto* e = t.as<EncTerm>()) {
      try {
        std::optional<Term> key;
        if (e->key_arg) key = instantiate(st, *e->key_arg);
        return encrypt_term(instantiate(st, e->payload), e->func, key);
      } catch (const Error& err) {
        if (err.code() != Errc::missing_knowledge) throw;
        auto it = st.opaque_.find(print_term(t));
        if (it == st.opaque_.end()) throw;
        return it->second;
      }
    }
    return t;
  }

  static void fresh(RoleState& st, const ProtocolSpec& spec, const Step& step, const CryptoProvider& crypto) {
    for (const auto& id : step.fresh) {
      if (st.knowledge_.count(id)) throw Error(Errc::check_failed, st.role_ + " already holds " + id);
      Generated g = generate_value(spec.sort_of(id), id, crypto);
      st.bind(id, g.value);
      if (g.secret) st.bind_private(id, std::move(*g.secret));
    }
  }

  static void derive(RoleState& st, const Step& step, const CryptoProvider& crypto) {
    for (const auto& d : step.derive) {
      if (d.role != st.role_) continue;
      auto own = st.privates_.find(d.own);
      auto peer = st.knowledge_.find(d.peer);
      if (own == st.privates_.end() || peer == st.knowledge_.end())
        throw Error(Errc::missing_knowledge, st.role_ + " cannot derive " + d.target);
      Bytes k = crypto.dh_shared(own->second.view(), peer->second.as<KeyTerm>()->key.bytes);
      st.bind(d.target, make_key(KeyMaterial{std::move(k), KeyEncoding::base64Binary, d.target}));
    }
  }

  struct Matcher {
    RoleState& st;
    const ProtocolSpec& spec;
    const CryptoProvider& crypto;
    const EngineOptions& options;
    int step;
    std::vector<std::pair<Term, Term>> pending;

    [[noreturn]] void violation(const std::string& what) const {
      throw Error(Errc::protocol_violation, "step " + std::to_string(step) + ": " + what);
    }

    void match(const Term& tmpl, const Term& msg) {
      if (tmpl.is<PairTerm>()) {
        auto a = flatten(tmpl);
        auto b = flatten(msg);
        if (a.size() != b.size())
          violation("expected " + std::to_string(a.size()) + " items, got " + std::to_string(b.size()));
        for (std::size_t i = 0; i < a.size(); ++i) match(a[i], b[i]);
        return;
      }
      if (auto* v = tmpl.as<VarTerm>()) {
        if (!is_leaf(msg)) violation("expected " + std::string(to_string(v->sort)) + " " + v->id + ", got " +
                                     std::string(kind_name(msg)));
        if (!sort_accepts(v->sort, msg))
          violation(v->id + " must be a " + std::string(to_string(v->sort)) + ", got " + std::string(kind_name(msg)));
        auto known = st.knowledge_.find(v->id);
        if (known != st.knowledge_.end()) {
          if (!(known->second == msg))
            throw Error(Errc::check_failed, std::string(is_nonce_sort(v->sort) ? "nonce-echo:" : "echo:") + v->id);
          return;
        }
        if (v->sort == Sort::timestamp) {
          auto t = std::get<Timestamp>(msg.as<NonceTerm>()->nonce).instant;
          auto skew = now_ms() - t;
          if (skew > options.freshness_window || -skew > options.freshness_window)
            throw Error(Errc::check_failed, "timestamp-freshness:" + v->id);
        }
        st.bind(v->id, msg);
        return;
      }
      if (auto* e = tmpl.as<EncTerm>()) {
        if (auto* s = msg.as<SealedTerm>()) {
          if (s->func != e->func) violation("expected a " + std::string(to_string(e->func)) + " block");
          pending.emplace_back(tmpl, msg);
          return;
        }
        auto* m = msg.as<EncTerm>();
        if (!m || m->func != e->func)
          violation("expected " + print_term(tmpl) + ", got " + std::string(kind_name(msg)));
        if (e->key_arg && m->key_arg) {
          auto* kv = e->key_arg->as<VarTerm>();
          auto known = kv ? st.knowledge_.find(kv->id) : st.knowledge_.end();
          if (known != st.knowledge_.end() && !(known->second == *m->key_arg))
            throw Error(Errc::check_failed, "key:" + kv->id);
        }
        match(e->payload, m->payload);
        return;
      }
      if (!(tmpl == msg)) throw Error(Errc::check_failed, "literal mismatch");
    }

    void settle() {
      bool progress = true;
      while (progress && !pending.empty()) {
        progress = false;
        auto batch = std::move(pending);
        pending.clear();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          KeyRing ring = st.key_ring();
          EnvelopeContext ctx{&crypto, &ring, st.known_terms()};
          EnvelopeOptions eo;
          eo.codec = options.codec;
          Term opened = open_sealed(batch[i].second, ctx, eo);
          if (opened.is<SealedTerm>()) {
            pending.push_back(batch[i]);
          } else {
            match(batch[i].first, opened);
            progress = true;
          }
        }
      }
      for (const auto& [tmpl, sealed] : pending) {
        const auto& e = *tmpl.as<EncTerm>();
        bool verifiable = false;
        if (e.func == FuncName::h || e.func == FuncName::hmac) {
          verifiable = true;
          for (const auto& id : vars_of(tmpl))
            if (!st.knowledge_.count(id)) verifiable = false;
        }
        if (verifiable) throw Error(Errc::check_failed, "digest:" + print_term(tmpl));
        st.opaque_.insert_or_assign(print_term(tmpl), sealed);
      }
    }
  };
};

Constructed step_construct(RoleState& st, const ProtocolSpec& spec, const CryptoProvider& crypto,
                           const EngineOptions& options) {
  if (st.done()) throw Error(Errc::not_your_turn, st.role() + " has finished");
  if (!st.next_is_send())
    throw Error(Errc::not_your_turn, st.role() + " must first receive step " + std::to_string(*st.next_step()));
  const Step& step = spec.step(*st.next_step());
  auto t0 = Clock::now();
  Engine::fresh(st, spec, step, crypto);
  Engine::derive(st, step, crypto);
  Term msg = Engine::instantiate(st, step.message);
  KeyRing ring = st.key_ring();
  EnvelopeContext ctx{&crypto, &ring, {}};
  EnvelopeOptions eo;
  eo.codec = options.codec;
  Constructed out;
  out.step = step.number;
  out.envelope = build_envelope(msg, ctx, eo);
  out.xml = serialize(out.envelope, options.codec);
  out.elapsed = Clock::now() - t0;
  st.timings_.push_back({st.role(), step.number, true, out.elapsed.count()});
  st.transcript_.push_back({step.number, step.sender, step.receiver, step.template_text, out.xml});
  ++st.cursor_;
  return out;
}

std::chrono::nanoseconds step_process(RoleState& st, const ProtocolSpec& spec, std::string_view xml,
                                      const CryptoProvider& crypto, const EngineOptions& options) {
  if (st.done()) throw Error(Errc::not_your_turn, st.role() + " has finished");
  if (st.next_is_send())
    throw Error(Errc::not_your_turn, st.role() + " must first send step " + std::to_string(*st.next_step()));
  const Step& step = spec.step(*st.next_step());
  auto t0 = Clock::now();
  KeyRing ring = st.key_ring();
  EnvelopeContext ctx{&crypto, &ring, st.known_terms()};
  EnvelopeOptions eo;
  eo.codec = options.codec;
  eo.allow_sealed = true;
  Term msg = parse_envelope(xml, ctx, eo);
  Engine::Matcher m{st, spec, crypto, options, step.number, {}};
  m.match(step.message, msg);
  m.settle();
  Engine::derive(st, step, crypto);
  auto elapsed = Clock::now() - t0;
  st.timings_.push_back({st.role(), step.number, false, elapsed.count()});
  st.transcript_.push_back({step.number, step.sender, step.receiver, step.template_text, std::string(xml)});
  ++st.cursor_;
  return elapsed;
}

std::map<std::string, std::string> goal_digests(const RoleState& st, const ProtocolSpec& spec,
                                                const CryptoProvider& crypto) {
  std::map<std::string, std::string> out;
  for (const auto& g : spec.goals) {
    if (!contains(g.roles, st.role())) continue;
    if (auto v = st.value(g.id)) out[g.id] = to_hex(crypto.hash(to_bytes(leaf_canonical(*v, {}))));
  }
  return out;
}

// ---- Reports ----

std::int64_t to_cms(std::int64_t ns) noexcept { return ns >= 0 ? (ns + 5'000) / 10'000 : -((-ns + 5'000) / 10'000); }

std::string format_cms(std::int64_t cms) {
  std::string sign = cms < 0 ? "-" : "";
  std::int64_t a = cms < 0 ? -cms : cms;
  std::string frac = std::to_string(a % 100);
  if (frac.size() < 2) frac = "0" + frac;
  return sign + std::to_string(a / 100) + "." + frac;
}

std::int64_t TimingReport::total_cms() const noexcept {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.participant_cms();
  return t;
}

bool TimingReport::identities_hold() const noexcept {
  std::int64_t sum = 0;
  for (const auto& r : rows) {
    if (r.participant_cms() != r.construction_cms + r.processing_cms) return false;
    sum += r.participant_cms();
  }
  return sum == total_cms();
}

std::string TimingReport::to_csv() const {
  std::string out = "participant_role,construction_ms,processing_ms,participant_total_ms,total_ms\n";
  std::string total = format_cms(total_cms());
  for (const auto& r : rows) {
    out += csv_field(r.participant_role) + "," + format_cms(r.construction_cms) + "," + format_cms(r.processing_cms) +
           "," + format_cms(r.participant_cms()) + "," + total + "\n";
  }
  return out;
}

std::string TimingReport::to_table() const {
  const std::vector<std::string> head{"Participant role", "Message construction (ms)", "Message processing (ms)",
                                      "Total participant (ms)", "Total (ms)"};
  std::vector<std::vector<std::string>> cells{head};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    cells.push_back({r.participant_role, format_cms(r.construction_cms), format_cms(r.processing_cms),
                     format_cms(r.participant_cms()), i == 0 ? format_cms(total_cms()) : ""});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      const auto& cell = cells[i][c];
      std::string pad(width[c] - cell.size(), ' ');
      if (c > 0) line += "  ";
      line += (c == 0 || i == 0) ? cell + pad : pad + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::string TimingReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["total_ms"] = format_cms(total_cms());
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"participant_role", r.participant_role},
                         {"construction_ms", format_cms(r.construction_cms)},
                         {"processing_ms", format_cms(r.processing_cms)},
                         {"participant_total_ms", format_cms(r.participant_cms())}});
  return j.dump(2);
}

TimingReport TimingReport::from_csv(std::string_view csv) {
  TimingReport rep;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || csv_split(line).size() != 5) throw Error(Errc::invalid_config, "CSV header");
  std::optional<std::int64_t> total;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = csv_split(line);
    if (f.size() != 5) throw Error(Errc::invalid_config, "CSV row needs five fields");
    auto c = parse_cms(f[1]), p = parse_cms(f[2]), pt = parse_cms(f[3]), t = parse_cms(f[4]);
    if (!c || !p || !pt || !t) throw Error(Errc::invalid_config, "CSV values must be milliseconds with at most two decimals");
    if (*pt != *c + *p) throw Error(Errc::invalid_config, "participant total differs from construction + processing");
    if (total && *total != *t) throw Error(Errc::invalid_config, "protocol total differs between rows");
    total = t;
    rep.rows.push_back({f[0], *c, *p});
  }
  if (total && *total != rep.total_cms()) throw Error(Errc::invalid_config, "protocol total is not the row sum");
  return rep;
}

std::vector<RawRow> aggregate_rows(const ProtocolSpec& spec, const std::vector<StepTiming>& timings) {
  std::vector<RawRow> out;
  for (const auto& row : spec.rows) {
    RawRow r{row.label, 0, 0};
    for (const auto& t : timings) {
      if (t.role != row.role) continue;
      if (!row.steps.empty() && std::find(row.steps.begin(), row.steps.end(), t.step) == row.steps.end()) continue;
      (t.construction ? r.construction_ns : r.processing_ns) += t.nanoseconds;
    }
    out.push_back(std::move(r));
  }
  return out;
}

TimingReport median_report(const ProtocolSpec& spec, const std::vector<std::vector<RawRow>>& runs) {
  TimingReport rep;
  rep.protocol = spec.name;
  for (std::size_t i = 0; i < spec.rows.size(); ++i) {
    std::vector<std::int64_t> c, p;
    for (const auto& run : runs) {
      c.push_back(run.at(i).construction_ns);
      p.push_back(run.at(i).processing_ns);
    }
    rep.rows.push_back({spec.rows[i].label, to_cms(median(c)), to_cms(median(p))});
  }
  return rep;
}

// ---- Runs ----

RunError::RunError(const Error& cause, int step, std::vector<TranscriptEntry> transcript)
    : Error(cause.code(), "step " + std::to_string(step) + ": " + cause.detail()),
      step_(step),
      transcript_(std::move(transcript)) {}

World world_for(const ProtocolSpec& spec, Channel& channel, const CryptoProvider& crypto) {
  if (auto json = channel.provision(spec.name)) return World::from_json(*json, spec);
  return World::generate(spec, crypto);
}

RunResult run_protocol(const ProtocolSpec& spec, Channel& channel, const World& world, const CryptoProvider& crypto,
                       const RunOptions& options) {
  RunResult result;
  result.session = options.session ? *options.session : random_uuid(crypto);
  std::map<std::string, RoleState> states;
  auto local = [&](const std::string& role) { return !channel.remote_roles() || role == spec.initiator(); };
  for (const auto& r : spec.roles)
    if (local(r)) states.emplace(r, RoleState(spec, r, world));

  for (const auto& step : spec.steps) {
    try {
      if (local(step.sender)) {
        Constructed c = step_construct(states.at(step.sender), spec, crypto, options.engine);
        std::string xml = std::move(c.xml);
        if (options.tamper) options.tamper(step.number, xml);
        channel.send({spec.name, result.session, xml});
        result.transcript.push_back({step.number, step.sender, step.receiver, step.template_text, xml});
      }
      if (local(step.receiver)) {
        Frame f = channel.receive(options.engine.receive_timeout);
        if (!local(step.sender))
          result.transcript.push_back({step.number, step.sender, step.receiver, step.template_text, f.envelope});
        step_process(states.at(step.receiver), spec, f.envelope, crypto, options.engine);
      }
    } catch (const Error& e) {
      throw RunError(e, step.number, result.transcript);
    }
  }

  RemoteReport remote = channel.drain_remote();
  for (const auto& [role, st] : states) {
    result.timings.insert(result.timings.end(), st.timings().begin(), st.timings().end());
    result.goals[role] = goal_digests(st, spec, crypto);
  }
  result.timings.insert(result.timings.end(), remote.timings.begin(), remote.timings.end());
  for (const auto& [role, g] : remote.goals) result.goals[role] = g;

  int last = spec.steps.back().number;
  for (const auto& goal : spec.goals) {
    std::optional<std::string> first;
    for (const auto& role : goal.roles) {
      auto rg = result.goals.find(role);
      auto it = rg == result.goals.end() ? decltype(rg->second.end()){} : rg->second.find(goal.id);
      if (rg == result.goals.end() || it == rg->second.end())
        throw RunError(Error(Errc::check_failed, "goal " + goal.id + " unknown to " + role), last, result.transcript);
      if (first && *first != it->second)
        throw RunError(Error(Errc::check_failed, "goal " + goal.id + " differs across roles"), last, result.transcript);
      first = it->second;
    }
  }
  result.report = median_report(spec, {aggregate_rows(spec, result.timings)});
  return result;
}

namespace {

void shape_into(const xml::Element& e, std::string& out) {
  out += '<';
  out += e.name;
  for (const auto& [k, v] : e.attributes) {
    if (k == "wsu:Id") continue;
    out += ' ' + k + "=\"" + v + "\"";
  }
  out += '>';
  if (!e.text.empty()) out += "#" + std::to_string(e.text.size());
  for (const auto& c : e.children) shape_into(c, out);
  out += "</" + e.name + ">";
}

}  // namespace

std::string envelope_shape(std::string_view envelope_xml) {
  std::string out;
  shape_into(xml::parse(envelope_xml), out);
  return out;
}

}  // namespace wsext
