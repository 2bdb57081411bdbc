#include "wsext/term.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "wsext/error.hpp"

namespace wsext {

namespace {

constexpr std::array<std::pair<FuncName, std::string_view>, 4> kFuncNames{{
    {FuncName::sk, "sk"},
    {FuncName::pk, "pk"},
    {FuncName::h, "h"},
    {FuncName::hmac, "hmac"},
}};

constexpr std::array<std::pair<Sort, std::string_view>, 13> kSortNames{{
    {Sort::plain_name, "name"},
    {Sort::distinguished_name, "dn"},
    {Sort::user_domain_name, "userdomain"},
    {Sort::ipv4_name, "ipv4"},
    {Sort::ipv6_name, "ipv6"},
    {Sort::domain_name, "domain"},
    {Sort::random_nonce, "nonce"},
    {Sort::timestamp, "timestamp"},
    {Sort::key, "key"},
    {Sort::public_key, "pubkey"},
    {Sort::signing_key, "privkey"},
    {Sort::dh_key, "dhkey"},
    {Sort::user_data, "data"},
}};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

Term wrap(TermNode node) { return Term(std::make_shared<const TermNode>(std::move(node))); }

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::invalid_term, what);
}

}  // namespace

std::string_view to_string(FuncName f) noexcept {
  for (auto [k, v] : kFuncNames)
    if (k == f) return v;
  return "?";
}

std::optional<FuncName> func_from_string(std::string_view s) noexcept {
  for (auto [k, v] : kFuncNames)
    if (v == s) return k;
  return std::nullopt;
}

std::string_view to_string(Sort s) noexcept {
  for (auto [k, v] : kSortNames)
    if (k == s) return v;
  return "?";
}

std::optional<Sort> sort_from_string(std::string_view s) noexcept {
  for (auto [k, v] : kSortNames)
    if (v == s) return k;
  return std::nullopt;
}

bool is_name_sort(Sort s) noexcept {
  switch (s) {
    case Sort::plain_name:
    case Sort::distinguished_name:
    case Sort::user_domain_name:
    case Sort::ipv4_name:
    case Sort::ipv6_name:
    case Sort::domain_name: return true;
    default: return false;
  }
}

bool is_key_sort(Sort s) noexcept {
  return s == Sort::key || s == Sort::public_key || s == Sort::signing_key || s == Sort::dh_key;
}

bool is_nonce_sort(Sort s) noexcept { return s == Sort::random_nonce || s == Sort::timestamp; }

Term make_name(NameKind name) {
  std::visit(Overloaded{
                 [](const DistinguishedName& dn) {
                   require(!dn.organization.empty() && !dn.organizational_unit.empty() &&
                               !dn.common_name.empty() && !dn.country.empty(),
                           "distinguished name fields must be non-empty");
                 },
                 [](const UserDomainName& ud) {
                   require(!ud.user.empty() && !ud.domain.empty(), "user-domain name parts must be non-empty");
                 },
                 [](const IpV4Name& n) { require(!n.address.empty(), "empty IPv4 name"); },
                 [](const IpV6Name& n) { require(!n.address.empty(), "empty IPv6 name"); },
                 [](const DomainName& n) { require(!n.domain.empty(), "empty domain name"); },
                 [](const PlainName& n) { require(!n.name.empty(), "empty user name"); },
             },
             name);
  return wrap({NameTerm{std::move(name)}});
}

Term make_nonce(Nonce nonce) {
  if (auto* r = std::get_if<RandomNonce>(&nonce))
    require(r->bytes.size() >= kMinRandomNonceLength, "random nonce shorter than 8 octets");
  return wrap({NonceTerm{std::move(nonce)}});
}

Term make_key(KeyMaterial key) {
  require(!key.bytes.empty(), "key material must be non-empty");
  return wrap({KeyTerm{std::move(key)}});
}

Term make_data(UserData data) {
  require(data.content.empty() == data.empty_payload, "empty user data must be flagged as an empty payload");
  return wrap({DataTerm{std::move(data)}});
}

Term make_var(std::string id, Sort sort) {
  require(!id.empty(), "placeholder needs an identifier");
  return wrap({VarTerm{std::move(id), sort}});
}

Term make_sealed(SealedTerm sealed) {
  require(!sealed.block_xml.empty(), "sealed block is empty");
  return wrap({std::move(sealed)});
}

Term pair(Term left, Term right) { return wrap({PairTerm{std::move(left), std::move(right)}}); }

Term sequence(const std::vector<Term>& items) {
  require(!items.empty(), "empty sequence");
  Term acc = items.front();
  for (std::size_t i = 1; i < items.size(); ++i) acc = pair(acc, items[i]);
  return acc;
}

Term encrypt_term(Term payload, FuncName func, std::optional<Term> key_arg) {
  if (takes_key(func) && !key_arg)
    throw Error(Errc::missing_key_arg, std::string(to_string(func)) + " requires a key argument");
  if (!takes_key(func) && key_arg) throw Error(Errc::unexpected_key_arg, "h takes no key argument");
  if (key_arg) {
    const Term& k = *key_arg;
    bool ok = k.is<KeyTerm>() || k.is<NameTerm>();
    if (auto* v = k.as<VarTerm>()) ok = is_key_sort(v->sort) || is_name_sort(v->sort);
    require(ok, "key argument must be a key or a name");
  }
  return wrap({EncTerm{std::move(payload), func, std::move(key_arg)}});
}

bool term_equal(const Term& a, const Term& b) {
  if (&a.node() == &b.node()) return true;
  const auto& va = a.node().value;
  const auto& vb = b.node().value;
  if (va.index() != vb.index()) return false;
  return std::visit(
      Overloaded{
          [&](const NameTerm& x) { return x.name == std::get<NameTerm>(vb).name; },
          [&](const NonceTerm& x) { return x.nonce == std::get<NonceTerm>(vb).nonce; },
          [&](const KeyTerm& x) {
            const auto& y = std::get<KeyTerm>(vb).key;
            return x.key.bytes == y.bytes && x.key.encoding == y.encoding;
          },
          [&](const DataTerm& x) { return x.data == std::get<DataTerm>(vb).data; },
          [&](const PairTerm& x) {
            const auto& y = std::get<PairTerm>(vb);
            return term_equal(x.left, y.left) && term_equal(x.right, y.right);
          },
          [&](const EncTerm& x) {
            const auto& y = std::get<EncTerm>(vb);
            if (x.func != y.func || x.key_arg.has_value() != y.key_arg.has_value()) return false;
            if (x.key_arg && !term_equal(*x.key_arg, *y.key_arg)) return false;
            return term_equal(x.payload, y.payload);
          },
          [&](const VarTerm& x) {
            const auto& y = std::get<VarTerm>(vb);
            return x.id == y.id && x.sort == y.sort;
          },
          [&](const SealedTerm& x) {
            const auto& y = std::get<SealedTerm>(vb);
            return x.func == y.func && x.key_ref == y.key_ref && x.block_xml == y.block_xml &&
                   x.in_body == y.in_body;
          },
      },
      va);
}

std::size_t term_size(const Term& t) {
  if (auto* p = t.as<PairTerm>()) return 1 + term_size(p->left) + term_size(p->right);
  if (auto* e = t.as<EncTerm>()) return 1 + term_size(e->payload) + (e->key_arg ? term_size(*e->key_arg) : 0);
  return 1;
}

std::size_t term_depth(const Term& t) {
  if (auto* p = t.as<PairTerm>()) return 1 + std::max(term_depth(p->left), term_depth(p->right));
  if (auto* e = t.as<EncTerm>())
    return 1 + std::max(term_depth(e->payload), e->key_arg ? term_depth(*e->key_arg) : std::size_t{0});
  return 1;
}

namespace {

void flatten_into(const Term& t, std::vector<Term>& out) {
  if (auto* p = t.as<PairTerm>()) {
    flatten_into(p->left, out);
    flatten_into(p->right, out);
  } else {
    out.push_back(t);
  }
}

}  // namespace

std::vector<Term> flatten(const Term& t) {
  std::vector<Term> out;
  flatten_into(t, out);
  return out;
}

Term normalize_pairs(const Term& t) {
  std::vector<Term> items = flatten(t);
  for (auto& item : items) {
    if (auto* e = item.as<EncTerm>()) item = encrypt_term(normalize_pairs(e->payload), e->func, e->key_arg);
  }
  return sequence(items);
}

bool is_leaf(const Term& t) noexcept {
  return t.is<NameTerm>() || t.is<NonceTerm>() || t.is<KeyTerm>() || t.is<DataTerm>();
}

std::optional<Sort> sort_of(const Term& t) {
  if (auto* v = t.as<VarTerm>()) return v->sort;
  if (auto* n = t.as<NameTerm>()) {
    static constexpr Sort kByIndex[] = {Sort::distinguished_name, Sort::user_domain_name, Sort::ipv4_name,
                                        Sort::ipv6_name,          Sort::domain_name,      Sort::plain_name};
    return kByIndex[n->name.index()];
  }
  if (auto* n = t.as<NonceTerm>())
    return std::holds_alternative<RandomNonce>(n->nonce) ? Sort::random_nonce : Sort::timestamp;
  if (t.is<KeyTerm>()) return Sort::key;
  if (t.is<DataTerm>()) return Sort::user_data;
  return std::nullopt;
}

std::string_view kind_name(const Term& t) noexcept {
  static constexpr std::string_view kNames[] = {"Name", "Nonce", "Key", "Data", "Pair", "Enc", "Var", "Sealed"};
  return kNames[t.node().value.index()];
}

}  // namespace wsext

namespace wsext {

std::string format_utc(UtcMillis t) {
  using namespace std::chrono;
  auto day = floor<days>(t);
  year_month_day ymd{day};
  hh_mm_ss<milliseconds> tod{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                static_cast<long>(tod.seconds().count()), static_cast<long>(tod.subseconds().count()));
  return buf;
}

std::optional<UtcMillis> parse_utc(std::string_view text) {
  using namespace std::chrono;
  // YYYY-MM-DDThh:mm:ss.sssZ
  if (text.size() != 24) return std::nullopt;
  static constexpr std::string_view kShape = "dddd-dd-ddTdd:dd:dd.dddZ";
  for (std::size_t i = 0; i < kShape.size(); ++i) {
    char c = text[i];
    if (kShape[i] == 'd' ? (c < '0' || c > '9') : c != kShape[i]) return std::nullopt;
  }
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = 0; i < len; ++i) v = v * 10 + (text[pos + i] - '0');
    return v;
  };
  year_month_day ymd{year{num(0, 4)}, month{static_cast<unsigned>(num(5, 2))},
                     day{static_cast<unsigned>(num(8, 2))}};
  int hh = num(11, 2), mm = num(14, 2), ss = num(17, 2), ms = num(20, 3);
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  return UtcMillis{sys_days{ymd}.time_since_epoch() + hours{hh} + minutes{mm} + seconds{ss} +
                   milliseconds{ms}};
}

}  // namespace wsext
