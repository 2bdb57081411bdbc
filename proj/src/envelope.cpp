#include "wsext/envelope.hpp"

#include <algorithm>
#include <map>

#include "wsext/error.hpp"
#include "wsext/xml.hpp"

namespace wsext {

namespace {

constexpr std::string_view kBlockElement = "EncryptedBlock";
constexpr std::string_view kDataElement = "UserData";
constexpr std::string_view kDigestPrefix = "#digest";
constexpr std::size_t kMaxPreimageCandidates = 1 << 16;

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::malformed_envelope, what); }

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; });
}

std::vector<std::string> split_spaces(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    auto j = s.find(' ', i);
    if (j == std::string_view::npos) j = s.size();
    out.emplace_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

std::string join_spaces(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(ByteView b) {
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

bool is_registered(std::string_view id) {
  const auto& all = registered_algorithms();
  return std::find(all.begin(), all.end(), id) != all.end();
}

bool valid_manifest_entry(std::string_view s) {
  return s == kBlockElement || s == kDataElement || schema_from_string(s).has_value();
}

EncryptedBlock block_from_element(const xml::Element& e) {
  if (e.name != kBlockElement) malformed("expected EncryptedBlock, found " + e.name);
  if (!e.children.empty()) malformed("EncryptedBlock must carry base64 text only");
  EncryptedBlock b;
  for (const auto& [k, v] : e.attributes) {
    if (k == "Algorithm") {
      if (!is_registered(v)) throw Error(Errc::unknown_algorithm, "'" + v + "' is not a registered algorithm");
      b.algorithm_id = v;
    } else if (k == "Func") {
      auto f = func_from_string(v);
      if (!f) malformed("unknown Func '" + v + "'");
      b.func = *f;
    } else if (k == "KeyRef") {
      b.key_ref = v;
    } else if (k == "KeyRefType") {
      if (v != "name") malformed("KeyRefType must be 'name'");
      b.key_ref_is_name = true;
    } else if (k == "Manifest") {
      b.inner_manifest = split_spaces(v);
    } else {
      malformed("unexpected EncryptedBlock attribute " + k);
    }
  }
  if (!e.attribute("Algorithm") || !e.attribute("Func") || !e.attribute("Manifest"))
    malformed("EncryptedBlock needs Algorithm, Func and Manifest");
  if (b.inner_manifest.empty() || !std::all_of(b.inner_manifest.begin(), b.inner_manifest.end(),
                                               [](const std::string& s) { return valid_manifest_entry(s); }))
    malformed("bad EncryptedBlock manifest");
  if (takes_key(b.func) == b.key_ref.empty()) malformed("KeyRef must be present exactly when Func takes a key");
  if (b.key_ref_is_name && b.key_ref.empty()) malformed("KeyRefType without KeyRef");
  auto ct = base64_decode(e.text);
  if (!ct || ct->empty()) malformed("EncryptedBlock content is not non-empty base64");
  b.ciphertext = std::move(*ct);
  return b;
}

UserData user_data_from_element(const xml::Element& e) {
  if (!e.children.empty()) malformed("UserData must carry base64 text only");
  UserData d;
  bool has_media = false;
  for (const auto& [k, v] : e.attributes) {
    if (k == "MediaType") {
      d.media_label = v;
      has_media = true;
    } else if (k == "Empty") {
      if (v != "true") malformed("Empty must be 'true'");
      d.empty_payload = true;
    } else {
      malformed("unexpected UserData attribute " + k);
    }
  }
  if (!has_media) malformed("UserData needs MediaType");
  auto content = base64_decode(e.text);
  if (!content) throw Error(Errc::malformed_binary, "UserData content is not base64");
  d.content = std::move(*content);
  if (d.content.empty() != d.empty_payload) malformed("UserData emptiness does not match its Empty flag");
  return d;
}

Term digest_placeholder(std::size_t index) {
  return make_var(std::string(kDigestPrefix) + std::to_string(index), Sort::user_data);
}

Term substitute(const Term& t, const std::map<std::string, Term>& repl) {
  if (auto* v = t.as<VarTerm>()) {
    auto it = repl.find(v->id);
    return it == repl.end() ? t : it->second;
  }
  if (auto* p = t.as<PairTerm>()) return pair(substitute(p->left, repl), substitute(p->right, repl));
  if (auto* e = t.as<EncTerm>()) return encrypt_term(substitute(e->payload, repl), e->func, e->key_arg);
  return t;
}

enum class Place { header, body };

class Encoder {
 public:
  Encoder(const EnvelopeContext& ctx, const EnvelopeOptions& options) : ctx_(ctx), options_(options) {
    if (!ctx.crypto) throw Error(Errc::invalid_config, "envelope context has no crypto provider");
  }

  Place placement(const Term& item) const {
    if (item.is<NameTerm>() || item.is<NonceTerm>() || item.is<KeyTerm>()) return Place::header;
    if (item.is<DataTerm>()) return Place::body;
    if (auto* s = item.as<SealedTerm>()) return s->in_body ? Place::body : Place::header;
    if (auto* e = item.as<EncTerm>()) {
      auto items = flatten(e->payload);
      if (!takes_key(e->func) || e->func == FuncName::hmac) {
        for (const auto& i : items)
          if (!is_leaf(i)) throw Error(Errc::unsupported_term, "digest payloads must be sequences of leaves");
        return Place::header;
      }
      Place first = placement(items.front());
      for (std::size_t i = 1; i < items.size(); ++i)
        if (placement(items[i]) != first)
          throw Error(Errc::mixed_placement, "encrypted payload mixes user data and security tokens");
      return first;
    }
    if (auto* v = item.as<VarTerm>()) throw Error(Errc::unsupported_term, "placeholder '" + v->id + "' is not bound");
    throw Error(Errc::unsupported_term, std::string(kind_name(item)) + " cannot be placed");
  }

  EncryptedBlock block(const EncTerm& e) const {
    EncryptedBlock b;
    b.func = e.func;
    std::string plaintext;
    for (const auto& item : flatten(e.payload)) {
      auto [kind, text] = item_xml(item);
      b.inner_manifest.push_back(std::move(kind));
      plaintext += text;
    }
    const CryptoProvider& crypto = *ctx_.crypto;
    Bytes pt = to_bytes(plaintext);
    switch (e.func) {
      case FuncName::h:
        b.algorithm_id = crypto.suite().hash_algorithm;
        b.ciphertext = crypto.hash(pt);
        break;
      case FuncName::hmac: {
        auto [key, ref, by_name] = symmetric_key(*e.key_arg);
        b.algorithm_id = crypto.suite().hmac_algorithm;
        b.ciphertext = crypto.hmac(key, pt);
        b.key_ref = ref;
        b.key_ref_is_name = by_name;
        break;
      }
      case FuncName::sk: {
        auto [key, ref, by_name] = symmetric_key(*e.key_arg);
        b.algorithm_id = crypto.suite().sk_algorithm;
        b.ciphertext = crypto.sk_encrypt(key, pt);
        b.key_ref = ref;
        b.key_ref_is_name = by_name;
        break;
      }
      case FuncName::pk: asymmetric(*e.key_arg, pt, b); break;
    }
    return b;
  }

  std::pair<std::string, std::string> item_xml(const Term& item) const {
    if (auto* d = item.as<DataTerm>()) return {std::string(kDataElement), user_data_xml(d->data)};
    if (auto* e = item.as<EncTerm>()) return {std::string(kBlockElement), block_xml(block(*e))};
    if (auto* s = item.as<SealedTerm>()) return {std::string(kBlockElement), s->block_xml};
    if (item.is<PairTerm>()) throw Error(Errc::unsupported_term, "nested pair after flattening");
    if (auto* v = item.as<VarTerm>()) throw Error(Errc::unsupported_term, "placeholder '" + v->id + "' is not bound");
    TokenElement tok = encode_token(item, options_.codec);
    return {std::string(to_string(tok.schema_id)), std::move(tok.xml)};
  }

 private:
  struct Resolved {
    Bytes key;
    std::string ref;
    bool by_name;
  };

  Resolved symmetric_key(const Term& arg) const {
    if (auto* k = arg.as<KeyTerm>()) {
      std::string ref = k->key.label;
      if (ref.empty() && ctx_.keys)
        if (const auto* entry = ctx_.keys->find_key(arg)) ref = entry->label;
      if (ref.empty()) throw Error(Errc::unresolved_key, "symmetric key has no label to reference");
      return {k->key.bytes, ref, false};
    }
    if (arg.is<NameTerm>() && ctx_.keys) {
      if (const auto* entry = ctx_.keys->find_owner(arg, KeyUse::symmetric))
        return {entry->term.as<KeyTerm>()->key.bytes, entry->label, true};
    }
    throw Error(Errc::unresolved_key, "no symmetric key for " + std::string(kind_name(arg)) + " key argument");
  }

  void asymmetric(const Term& arg, const Bytes& pt, EncryptedBlock& b) const {
    const CryptoProvider& crypto = *ctx_.crypto;
    const KeyEntry* entry = nullptr;
    Bytes public_part;
    if (auto* k = arg.as<KeyTerm>()) {
      if (ctx_.keys) {
        if (!k->key.label.empty()) entry = ctx_.keys->find(k->key.label);
        if (!entry) entry = ctx_.keys->find_key(arg);
      }
      public_part = k->key.bytes;
      b.key_ref = entry ? entry->label : k->key.label;
    } else if (arg.is<NameTerm>() && ctx_.keys) {
      entry = ctx_.keys->find_owner(arg, KeyUse::public_encrypt);
      if (!entry) entry = ctx_.keys->find_owner(arg, KeyUse::signing);
      if (entry) {
        public_part = entry->term.as<KeyTerm>()->key.bytes;
        b.key_ref = entry->label;
        b.key_ref_is_name = true;
      }
    }
    if (b.key_ref.empty()) throw Error(Errc::unresolved_key, "no asymmetric key for pk key argument");
    if (entry && entry->use == KeyUse::signing) {
      if (entry->private_part.empty())
        throw Error(Errc::unresolved_key, "signing with '" + entry->label + "' needs its private half");
      Bytes sig = crypto.sign(entry->private_part.view(), pt);
      b.algorithm_id = crypto.suite().signature_algorithm;
      b.ciphertext.reserve(4 + pt.size() + sig.size());
      put_u32(b.ciphertext, static_cast<std::uint32_t>(pt.size()));
      b.ciphertext.insert(b.ciphertext.end(), pt.begin(), pt.end());
      b.ciphertext.insert(b.ciphertext.end(), sig.begin(), sig.end());
      return;
    }
    if (entry && entry->use == KeyUse::symmetric)
      throw Error(Errc::unresolved_key, "'" + entry->label + "' is a symmetric key");
    b.algorithm_id = crypto.suite().pk_algorithm;
    b.ciphertext = crypto.pk_encrypt(public_part, pt);
  }

  const EnvelopeContext& ctx_;
  const EnvelopeOptions& options_;
};

class Decoder {
 public:
  Decoder(const EnvelopeContext& ctx, const EnvelopeOptions& options) : ctx_(ctx), options_(options) {
    if (!ctx.crypto) throw Error(Errc::invalid_config, "envelope context has no crypto provider");
  }

  void note_leaf(const Term& t) { seen_.push_back(t); }

  Term block(const EncryptedBlock& b, bool in_body) {
    if (b.func == FuncName::h || b.func == FuncName::hmac) {
      pending_.push_back({b, in_body});
      return digest_placeholder(pending_.size() - 1);
    }
    const CryptoProvider& crypto = *ctx_.crypto;
    const KeyEntry* entry = ctx_.keys ? ctx_.keys->find(b.key_ref) : nullptr;
    Bytes plaintext;
    if (b.func == FuncName::sk) {
      if (!entry || entry->use != KeyUse::symmetric) return unresolved(b, in_body);
      if (b.algorithm_id != crypto.suite().sk_algorithm)
        throw Error(Errc::decrypt_failure, "block uses " + b.algorithm_id + ", suite has " + crypto.suite().sk_algorithm);
      try {
        plaintext = crypto.sk_decrypt(entry->term.as<KeyTerm>()->key.bytes, b.ciphertext);
      } catch (const Error& e) {
        throw Error(Errc::decrypt_failure, e.detail());
      }
    } else if (b.algorithm_id == crypto.suite().signature_algorithm) {
      if (!entry || entry->use != KeyUse::signing) return unresolved(b, in_body);
      ByteView ct = b.ciphertext;
      if (ct.size() < 4 || get_u32(ct) > ct.size() - 4) throw Error(Errc::decrypt_failure, "truncated signed block");
      std::size_t n = get_u32(ct);
      ByteView body = ct.subspan(4, n);
      if (!crypto.verify(entry->term.as<KeyTerm>()->key.bytes, body, ct.subspan(4 + n)))
        throw Error(Errc::decrypt_failure, "signature by '" + b.key_ref + "' does not verify");
      plaintext.assign(body.begin(), body.end());
    } else if (b.algorithm_id == crypto.suite().pk_algorithm) {
      if (!entry || entry->use != KeyUse::public_encrypt || entry->private_part.empty())
        return unresolved(b, in_body);
      plaintext = crypto.pk_decrypt(entry->private_part.view(), b.ciphertext);
    } else {
      throw Error(Errc::decrypt_failure, "pk block algorithm " + b.algorithm_id + " is not in the active suite");
    }
    auto items = plaintext_items(plaintext, b.inner_manifest, in_body);
    return encrypt_term(sequence(items), b.func, key_arg(b, *entry));
  }

  Term finish(const Term& t) {
    if (pending_.empty()) return t;
    std::map<std::string, Term> repl;
    for (std::size_t i = 0; i < pending_.size(); ++i)
      repl.emplace(std::string(kDigestPrefix) + std::to_string(i), resolve(pending_[i]));
    return substitute(t, repl);
  }

 private:
  struct Pending {
    EncryptedBlock block;
    bool in_body;
  };

  Term unresolved(const EncryptedBlock& b, bool in_body) const {
    if (!options_.allow_sealed)
      throw Error(Errc::unresolved_key, "no usable key '" + b.key_ref + "' for " + std::string(to_string(b.func)) +
                                            " block");
    return make_sealed(SealedTerm{b.func, b.key_ref, block_xml(b), in_body});
  }

  Term key_arg(const EncryptedBlock& b, const KeyEntry& entry) const {
    if (!b.key_ref_is_name) return entry.term;
    if (!entry.owner) throw Error(Errc::unresolved_key, "key '" + b.key_ref + "' has no owner name");
    return *entry.owner;
  }

  std::vector<Term> plaintext_items(const Bytes& plaintext, const std::vector<std::string>& manifest, bool in_body) {
    std::vector<xml::Element> elements;
    try {
      elements = xml::parse_fragment(to_string(plaintext));
    } catch (const Error& e) {
      throw Error(Errc::manifest_mismatch, "plaintext is not a token sequence: " + e.detail());
    }
    if (elements.size() != manifest.size())
      throw Error(Errc::manifest_mismatch, "manifest lists " + std::to_string(manifest.size()) + " items, plaintext has " +
                                               std::to_string(elements.size()));
    std::vector<Term> items;
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const auto& el = elements[i];
      if (el.name == kBlockElement) {
        if (manifest[i] != kBlockElement) throw Error(Errc::manifest_mismatch, "unexpected EncryptedBlock");
        items.push_back(block(block_from_element(el), in_body));
      } else if (el.name == kDataElement) {
        if (manifest[i] != kDataElement) throw Error(Errc::manifest_mismatch, "unexpected UserData");
        if (!in_body) malformed("user data inside a header block");
        items.push_back(make_data(user_data_from_element(el)));
        note_leaf(items.back());
      } else {
        Term t = decode_token(el, options_.codec);
        if (manifest[i] != to_string(schema_of(t)))
          throw Error(Errc::manifest_mismatch, "expected " + manifest[i] + ", found " + std::string(to_string(schema_of(t))));
        if (in_body) malformed("security token inside a body block");
        items.push_back(t);
        note_leaf(t);
      }
    }
    return items;
  }

  std::optional<std::pair<std::string, std::string>> leaf_xml(const Term& t) const {
    if (auto* d = t.as<DataTerm>()) return std::pair{std::string(kDataElement), user_data_xml(d->data)};
    try {
      TokenElement tok = encode_token(t, options_.codec);
      return std::pair{std::string(to_string(tok.schema_id)), std::move(tok.xml)};
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  Term resolve(const Pending& p) {
    const CryptoProvider& crypto = *ctx_.crypto;
    const EncryptedBlock& b = p.block;
    const KeyEntry* entry = nullptr;
    if (b.func == FuncName::hmac) {
      entry = ctx_.keys ? ctx_.keys->find(b.key_ref) : nullptr;
      if (!entry || entry->use != KeyUse::symmetric) return unresolved(b, p.in_body);
      if (b.algorithm_id != crypto.suite().hmac_algorithm)
        throw Error(Errc::decrypt_failure, "block uses " + b.algorithm_id + ", suite has " + crypto.suite().hmac_algorithm);
    } else if (b.algorithm_id != crypto.suite().hash_algorithm) {
      throw Error(Errc::decrypt_failure, "block uses " + b.algorithm_id + ", suite has " + crypto.suite().hash_algorithm);
    }

    std::vector<Term> pool = seen_;
    for (const auto& k : ctx_.known)
      for (const auto& leaf : flatten(k))
        if (is_leaf(leaf)) pool.push_back(leaf);

    // Candidates per manifest position, unique by canonical XML.
    std::vector<std::vector<std::pair<Term, std::string>>> slots(b.inner_manifest.size());
    std::size_t combos = 1;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      for (const auto& leaf : pool) {
        auto x = leaf_xml(leaf);
        if (!x || x->first != b.inner_manifest[i]) continue;
        bool dup = std::any_of(slots[i].begin(), slots[i].end(), [&](const auto& s) { return s.second == x->second; });
        if (!dup) slots[i].emplace_back(leaf, std::move(x->second));
      }
      combos *= std::max<std::size_t>(slots[i].size(), 1);
      if (slots[i].empty() || combos > kMaxPreimageCandidates) return unresolved_digest(b, p.in_body);
    }

    std::vector<std::size_t> idx(slots.size(), 0);
    while (true) {
      std::string text;
      for (std::size_t i = 0; i < slots.size(); ++i) text += slots[i][idx[i]].second;
      Bytes data = to_bytes(text);
      bool match = b.func == FuncName::h ? crypto.hash(data) == b.ciphertext
                                         : crypto.hmac_verify(entry->term.as<KeyTerm>()->key.bytes, data, b.ciphertext);
      if (match) {
        std::vector<Term> items;
        for (std::size_t i = 0; i < slots.size(); ++i) items.push_back(slots[i][idx[i]].first);
        std::optional<Term> arg;
        if (entry) arg = key_arg(b, *entry);
        return encrypt_term(sequence(items), b.func, arg);
      }
      std::size_t i = 0;
      while (i < idx.size() && ++idx[i] == slots[i].size()) idx[i++] = 0;
      if (i == idx.size()) break;
    }
    return unresolved_digest(b, p.in_body);
  }

  Term unresolved_digest(const EncryptedBlock& b, bool in_body) const {
    if (!options_.allow_sealed)
      throw Error(Errc::decrypt_failure, std::string(to_string(b.func)) + " digest matches no known preimage");
    return make_sealed(SealedTerm{b.func, b.key_ref, block_xml(b), in_body});
  }

  const EnvelopeContext& ctx_;
  const EnvelopeOptions& options_;
  std::vector<Term> seen_;
  std::vector<Pending> pending_;
};

}  // namespace

void KeyRing::add(KeyEntry entry) {
  if (!entry.term.is<KeyTerm>()) throw Error(Errc::invalid_term, "key ring entries must hold a key term");
  for (auto& e : entries_)
    if (e.label == entry.label) {
      e = std::move(entry);
      return;
    }
  entries_.push_back(std::move(entry));
}

const KeyEntry* KeyRing::find(std::string_view label) const {
  for (const auto& e : entries_)
    if (e.label == label) return &e;
  return nullptr;
}

const KeyEntry* KeyRing::find_owner(const Term& name, std::optional<KeyUse> use) const {
  for (const auto& e : entries_)
    if (e.owner && *e.owner == name && (!use || e.use == *use)) return &e;
  return nullptr;
}

const KeyEntry* KeyRing::find_key(const Term& key) const {
  for (const auto& e : entries_)
    if (e.term == key) return &e;
  return nullptr;
}

std::string block_xml(const EncryptedBlock& b) {
  std::vector<std::pair<std::string, std::string>> attrs{
      {"Algorithm", b.algorithm_id},
      {"Func", std::string(to_string(b.func))},
      {"Manifest", join_spaces(b.inner_manifest)},
  };
  if (!b.key_ref.empty()) attrs.emplace_back("KeyRef", b.key_ref);
  if (b.key_ref_is_name) attrs.emplace_back("KeyRefType", "name");
  std::string out;
  xml::open_tag(out, kBlockElement, std::move(attrs));
  out += base64_encode(b.ciphertext);
  xml::close_tag(out, kBlockElement);
  return out;
}

std::string user_data_xml(const UserData& d) {
  std::vector<std::pair<std::string, std::string>> attrs{{"MediaType", d.media_label}};
  if (d.empty_payload) attrs.emplace_back("Empty", "true");
  std::string out;
  xml::open_tag(out, kDataElement, std::move(attrs));
  out += base64_encode(d.content);
  xml::close_tag(out, kDataElement);
  return out;
}

std::string random_uuid(const CryptoProvider& crypto) {
  Bytes r = crypto.random_bytes(16);
  r[6] = static_cast<std::uint8_t>((r[6] & 0x0f) | 0x40);
  r[8] = static_cast<std::uint8_t>((r[8] & 0x3f) | 0x80);
  std::string hex = to_hex(r);
  std::transform(hex.begin(), hex.end(), hex.begin(), [](char c) { return static_cast<char>(std::tolower(c)); });
  return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" + hex.substr(16, 4) + "-" +
         hex.substr(20);
}

Envelope build_envelope(const Term& t, const EnvelopeContext& ctx, const EnvelopeOptions& options) {
  Encoder enc(ctx, options);
  Envelope env;
  env.message_id = options.message_id ? *options.message_id : random_uuid(*ctx.crypto);
  for (const auto& item : flatten(t)) {
    Place place = enc.placement(item);
    if (!env.layout.empty()) env.layout += ' ';
    env.layout += place == Place::header ? 'H' : 'B';
    std::optional<EncryptedBlock> blk;
    if (auto* e = item.as<EncTerm>()) blk = enc.block(*e);
    if (auto* s = item.as<SealedTerm>()) blk = block_from_element(xml::parse(s->block_xml));
    if (place == Place::header) {
      if (blk) env.header_tokens.emplace_back(std::move(*blk));
      else env.header_tokens.emplace_back(encode_token(item, options.codec));
    } else {
      if (blk) env.body_parts.emplace_back(std::move(*blk));
      else env.body_parts.emplace_back(item.as<DataTerm>()->data);
    }
  }
  return env;
}

std::string serialize(const Envelope& e, const CodecOptions& codec) {
  std::string out;
  xml::open_tag(out, "soap:Envelope",
                {{"xmlns", codec.extension_namespace},
                 {"xmlns:soap", std::string(kSoapNamespace)},
                 {"xmlns:wsse", std::string(kWsseNamespace)},
                 {"xmlns:wsu", std::string(kWsuNamespace)},
                 {"wsu:Id", e.message_id}});
  xml::open_tag(out, "soap:Header");
  xml::open_tag(out, "wsse:Security", {{"Layout", e.layout}});
  for (const auto& h : e.header_tokens) {
    if (auto* tok = std::get_if<TokenElement>(&h)) out += tok->xml;
    else out += block_xml(std::get<EncryptedBlock>(h));
  }
  xml::close_tag(out, "wsse:Security");
  xml::close_tag(out, "soap:Header");
  xml::open_tag(out, "soap:Body");
  for (const auto& b : e.body_parts) {
    if (auto* d = std::get_if<UserData>(&b)) out += user_data_xml(*d);
    else out += block_xml(std::get<EncryptedBlock>(b));
  }
  xml::close_tag(out, "soap:Body");
  xml::close_tag(out, "soap:Envelope");
  return out;
}

std::size_t envelope_size(const Envelope& e, const CodecOptions& codec) { return serialize(e, codec).size(); }

Envelope envelope_from_xml(std::string_view document, const CodecOptions& codec) {
  xml::Element root = xml::parse(document);
  if (root.name != "soap:Envelope") malformed("root element is " + root.name + ", not soap:Envelope");
  if (root.attribute("xmlns:soap") != std::optional<std::string_view>(kSoapNamespace))
    malformed("soap prefix is not bound to the SOAP 1.2 namespace");
  if (root.attribute("xmlns") != std::optional<std::string_view>(codec.extension_namespace))
    malformed("default namespace is not the token extension namespace");
  Envelope env;
  if (auto id = root.attribute("wsu:Id")) env.message_id = std::string(*id);
  if (!blank(root.text)) malformed("text directly inside soap:Envelope");
  const xml::Element* header = nullptr;
  const xml::Element* body = nullptr;
  for (const auto& c : root.children) {
    if (c.name == "soap:Header" && !header && !body) header = &c;
    else if (c.name == "soap:Body" && !body) body = &c;
    else malformed("unexpected " + c.name + " in soap:Envelope");
  }
  if (!body) malformed("missing soap:Body");
  const xml::Element* security = header ? header->child("wsse:Security") : nullptr;
  if (!security) malformed("missing wsse:Security header block");
  if (header->children.size() != 1) malformed("exactly one security header block is expected");
  auto layout = security->attribute("Layout");
  if (!layout) malformed("wsse:Security has no Layout");
  env.layout = std::string(*layout);
  std::size_t h_count = 0, b_count = 0;
  for (const auto& part : split_spaces(env.layout)) {
    if (part == "H") ++h_count;
    else if (part == "B") ++b_count;
    else malformed("bad Layout '" + env.layout + "'");
  }
  if (h_count + b_count == 0) malformed("empty Layout");

  if (!blank(security->text) || !blank(body->text)) malformed("stray text in header or body");
  for (const auto& c : security->children) {
    if (c.name == kBlockElement) env.header_tokens.emplace_back(block_from_element(c));
    else if (c.name == kDataElement) malformed("user data in the security header");
    else {
      Term t = decode_token(c, codec);
      env.header_tokens.emplace_back(TokenElement{schema_of(t), xml::to_string(c), t});
    }
  }
  for (const auto& c : body->children) {
    if (c.name == kBlockElement) env.body_parts.emplace_back(block_from_element(c));
    else if (c.name == kDataElement) env.body_parts.emplace_back(user_data_from_element(c));
    else malformed(c.name + " in the body; security tokens belong in the header");
  }
  if (env.header_tokens.size() != h_count || env.body_parts.size() != b_count)
    malformed("Layout does not match the header and body contents");
  return env;
}

Term envelope_to_term(const Envelope& e, const EnvelopeContext& ctx, const EnvelopeOptions& options) {
  Decoder dec(ctx, options);
  std::vector<Term> items;
  std::size_t hi = 0, bi = 0;
  for (const auto& part : split_spaces(e.layout)) {
    if (part == "H") {
      if (hi >= e.header_tokens.size()) malformed("Layout overruns the header");
      const auto& h = e.header_tokens[hi++];
      if (auto* tok = std::get_if<TokenElement>(&h)) {
        items.push_back(tok->source_term);
        dec.note_leaf(tok->source_term);
      } else {
        items.push_back(dec.block(std::get<EncryptedBlock>(h), false));
      }
    } else {
      if (bi >= e.body_parts.size()) malformed("Layout overruns the body");
      const auto& b = e.body_parts[bi++];
      if (auto* d = std::get_if<UserData>(&b)) {
        items.push_back(make_data(*d));
        dec.note_leaf(items.back());
      } else {
        items.push_back(dec.block(std::get<EncryptedBlock>(b), true));
      }
    }
  }
  if (items.empty()) malformed("envelope carries no items");
  return dec.finish(sequence(items));
}

Term parse_envelope(std::string_view document, const EnvelopeContext& ctx, const EnvelopeOptions& options) {
  return envelope_to_term(envelope_from_xml(document, options.codec), ctx, options);
}

Term open_sealed(const Term& sealed, const EnvelopeContext& ctx, const EnvelopeOptions& options) {
  const auto* s = sealed.as<SealedTerm>();
  if (!s) return sealed;
  EnvelopeOptions relaxed = options;
  relaxed.allow_sealed = true;
  Decoder dec(ctx, relaxed);
  return dec.finish(dec.block(block_from_element(xml::parse(s->block_xml)), s->in_body));
}

}  // namespace wsext
