#include "wsext/xsd_pattern.hpp"

#include <unicode/uchar.h>

#include <optional>
#include <vector>

#include "wsext/error.hpp"

namespace wsext {

namespace {

constexpr int kMaxRepeat = 1000;

std::optional<std::u32string> decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      return std::nullopt;
    }
    if (i + len > s.size()) return std::nullopt;
    for (std::size_t k = 1; k < len; ++k) {
      auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
    out.push_back(cp);
    i += len;
  }
  return out;
}

bool in_ranges(char32_t c, std::initializer_list<std::pair<char32_t, char32_t>> ranges) {
  for (auto [lo, hi] : ranges)
    if (c >= lo && c <= hi) return true;
  return false;
}

bool is_name_start(char32_t c) {
  return in_ranges(c, {{':', ':'},
                       {'A', 'Z'},
                       {'_', '_'},
                       {'a', 'z'},
                       {0xC0, 0xD6},
                       {0xD8, 0xF6},
                       {0xF8, 0x2FF},
                       {0x370, 0x37D},
                       {0x37F, 0x1FFF},
                       {0x200C, 0x200D},
                       {0x2070, 0x218F},
                       {0x2C00, 0x2FEF},
                       {0x3001, 0xD7FF},
                       {0xF900, 0xFDCF},
                       {0xFDF0, 0xFFFD},
                       {0x10000, 0xEFFFF}});
}

bool is_name_char(char32_t c) {
  return is_name_start(c) ||
         in_ranges(c, {{'-', '-'}, {'.', '.'}, {'0', '9'}, {0xB7, 0xB7}, {0x300, 0x36F}, {0x203F, 0x2040}});
}

// A predicate contributed by a multi-character or category escape.
struct Predicate {
  enum Kind { word, digit, space, name_start, name_char, dot, category } kind;
  std::uint32_t category_mask = 0;
  bool negated = false;

  bool test(char32_t c) const {
    bool r = false;
    switch (kind) {
      case word: r = is_xsd_word_char(c); break;
      case digit: r = is_xsd_digit(c); break;
      case space: r = c == 0x20 || c == 0x9 || c == 0xA || c == 0xD; break;
      case name_start: r = is_name_start(c); break;
      case name_char: r = is_name_char(c); break;
      case dot: r = c != 0xA && c != 0xD; break;
      case category: r = (U_MASK(u_charType(static_cast<UChar32>(c))) & category_mask) != 0; break;
    }
    return r != negated;
  }
};

struct CharSet {
  std::vector<std::pair<char32_t, char32_t>> ranges;
  std::vector<Predicate> predicates;
  bool negated = false;
  int subtract = -1;  // index of another CharSet
};

struct Node {
  enum Kind { empty, atom, concat, alt, repeat } kind = empty;
  int set = -1;
  std::vector<Node> kids;
  int min = 0;
  int max = -1;  // -1 is unbounded
};

struct State {
  enum Kind { character, split, match } kind;
  int set = -1;
  int out = -1;
  int out1 = -1;
};

}  // namespace

struct XsdPattern::Program {
  std::vector<CharSet> sets;
  std::vector<State> states;
  int start = -1;

  bool set_contains(int index, char32_t c) const {
    const CharSet& s = sets[static_cast<std::size_t>(index)];
    bool in = false;
    for (auto [lo, hi] : s.ranges)
      if (c >= lo && c <= hi) {
        in = true;
        break;
      }
    if (!in)
      for (const auto& p : s.predicates)
        if (p.test(c)) {
          in = true;
          break;
        }
    if (s.negated) in = !in;
    if (in && s.subtract >= 0 && set_contains(s.subtract, c)) in = false;
    return in;
  }
};

namespace {

std::optional<std::uint32_t> category_mask(std::u32string_view name) {
  std::string n(name.begin(), name.end());
  static const std::pair<const char*, std::uint32_t> kTable[] = {
      {"L", U_GC_L_MASK},   {"Lu", U_GC_LU_MASK}, {"Ll", U_GC_LL_MASK}, {"Lt", U_GC_LT_MASK},
      {"Lm", U_GC_LM_MASK}, {"Lo", U_GC_LO_MASK}, {"M", U_GC_M_MASK},   {"Mn", U_GC_MN_MASK},
      {"Mc", U_GC_MC_MASK}, {"Me", U_GC_ME_MASK}, {"N", U_GC_N_MASK},   {"Nd", U_GC_ND_MASK},
      {"Nl", U_GC_NL_MASK}, {"No", U_GC_NO_MASK}, {"P", U_GC_P_MASK},   {"Pc", U_GC_PC_MASK},
      {"Pd", U_GC_PD_MASK}, {"Ps", U_GC_PS_MASK}, {"Pe", U_GC_PE_MASK}, {"Pi", U_GC_PI_MASK},
      {"Pf", U_GC_PF_MASK}, {"Po", U_GC_PO_MASK}, {"Z", U_GC_Z_MASK},   {"Zs", U_GC_ZS_MASK},
      {"Zl", U_GC_ZL_MASK}, {"Zp", U_GC_ZP_MASK}, {"S", U_GC_S_MASK},   {"Sm", U_GC_SM_MASK},
      {"Sc", U_GC_SC_MASK}, {"Sk", U_GC_SK_MASK}, {"So", U_GC_SO_MASK}, {"C", U_GC_C_MASK},
      {"Cc", U_GC_CC_MASK}, {"Cf", U_GC_CF_MASK}, {"Co", U_GC_CO_MASK}, {"Cn", U_GC_CN_MASK},
  };
  for (auto [k, m] : kTable)
    if (n == k) return m;
  return std::nullopt;
}

class Parser {
 public:
  Parser(std::u32string pattern, XsdPattern::Program& program)
      : p_(std::move(pattern)), prog_(program) {}

  Node parse() {
    Node n = parse_alternation();
    if (pos_ != p_.size()) fail("unexpected ')'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::bad_pattern, what + " at position " + std::to_string(pos_));
  }

  bool at_end() const { return pos_ >= p_.size(); }
  char32_t peek(std::size_t ahead = 0) const { return pos_ + ahead < p_.size() ? p_[pos_ + ahead] : 0; }
  char32_t take() {
    if (at_end()) fail("unexpected end of pattern");
    return p_[pos_++];
  }

  int add_set(CharSet s) {
    prog_.sets.push_back(std::move(s));
    return static_cast<int>(prog_.sets.size() - 1);
  }

  Node atom_node(int set) {
    Node n;
    n.kind = Node::atom;
    n.set = set;
    return n;
  }

  Node parse_alternation() {
    std::vector<Node> branches;
    branches.push_back(parse_branch());
    while (!at_end() && peek() == U'|') {
      ++pos_;
      branches.push_back(parse_branch());
    }
    if (branches.size() == 1) return std::move(branches.front());
    Node n;
    n.kind = Node::alt;
    n.kids = std::move(branches);
    return n;
  }

  Node parse_branch() {
    Node n;
    n.kind = Node::concat;
    while (!at_end() && peek() != U'|' && peek() != U')') n.kids.push_back(parse_piece());
    if (n.kids.empty()) return Node{};
    if (n.kids.size() == 1) return std::move(n.kids.front());
    return n;
  }

  int parse_number() {
    if (at_end() || peek() < U'0' || peek() > U'9') fail("expected a number in quantifier");
    long v = 0;
    while (!at_end() && peek() >= U'0' && peek() <= U'9') {
      v = v * 10 + static_cast<long>(take() - U'0');
      if (v > kMaxRepeat) fail("quantifier bound too large");
    }
    return static_cast<int>(v);
  }

  Node parse_piece() {
    Node a = parse_atom();
    if (at_end()) return a;
    int min = -2, max = -1;
    switch (peek()) {
      case U'?': ++pos_; min = 0; max = 1; break;
      case U'*': ++pos_; min = 0; max = -1; break;
      case U'+': ++pos_; min = 1; max = -1; break;
      case U'{': {
        ++pos_;
        min = parse_number();
        if (peek() == U',') {
          ++pos_;
          max = peek() == U'}' ? -1 : parse_number();
        } else {
          max = min;
        }
        if (take() != U'}') fail("expected '}'");
        if (max != -1 && max < min) fail("quantifier max below min");
        break;
      }
      default: return a;
    }
    Node r;
    r.kind = Node::repeat;
    r.min = min;
    r.max = max;
    r.kids.push_back(std::move(a));
    return r;
  }

  Node parse_atom() {
    char32_t c = take();
    switch (c) {
      case U'(': {
        Node inner = parse_alternation();
        if (at_end() || take() != U')') fail("missing ')'");
        return inner;
      }
      case U'[': {
        int set = parse_class_body();
        return atom_node(set);
      }
      case U'.': {
        CharSet s;
        s.predicates.push_back({Predicate::dot});
        return atom_node(add_set(std::move(s)));
      }
      case U'\\': {
        CharSet s;
        parse_escape(s);
        return atom_node(add_set(std::move(s)));
      }
      case U'?':
      case U'*':
      case U'+':
      case U'{':
      case U'}':
      case U')':
      case U']':
        --pos_;
        fail("unexpected metacharacter");
      default: {
        CharSet s;
        s.ranges.emplace_back(c, c);
        return atom_node(add_set(std::move(s)));
      }
    }
  }

  // After the backslash. Single-char escapes return the character; the
  // others add to `s` and return nullopt.
  std::optional<char32_t> parse_escape(CharSet& s) {
    char32_t c = take();
    switch (c) {
      case U'n': s.ranges.emplace_back(0xA, 0xA); return char32_t{0xA};
      case U'r': s.ranges.emplace_back(0xD, 0xD); return char32_t{0xD};
      case U't': s.ranges.emplace_back(0x9, 0x9); return char32_t{0x9};
      case U'\\': case U'|': case U'.': case U'?': case U'*': case U'+': case U'(': case U')':
      case U'{': case U'}': case U'-': case U'[': case U']': case U'^':
        s.ranges.emplace_back(c, c);
        return c;
      case U's': case U'S': s.predicates.push_back({Predicate::space, 0, c == U'S'}); return std::nullopt;
      case U'i': case U'I': s.predicates.push_back({Predicate::name_start, 0, c == U'I'}); return std::nullopt;
      case U'c': case U'C': s.predicates.push_back({Predicate::name_char, 0, c == U'C'}); return std::nullopt;
      case U'd': case U'D': s.predicates.push_back({Predicate::digit, 0, c == U'D'}); return std::nullopt;
      case U'w': case U'W': s.predicates.push_back({Predicate::word, 0, c == U'W'}); return std::nullopt;
      case U'p': case U'P': {
        if (take() != U'{') fail("expected '{' after \\p");
        std::size_t start = pos_;
        while (!at_end() && peek() != U'}') ++pos_;
        if (at_end()) fail("unterminated category escape");
        std::u32string_view name(p_.data() + start, pos_ - start);
        ++pos_;
        auto mask = category_mask(name);
        if (!mask) fail("unsupported category escape");
        s.predicates.push_back({Predicate::category, *mask, c == U'P'});
        return std::nullopt;
      }
      default:
        --pos_;
        fail("unknown escape");
    }
  }

  // Parses a single character or single-char escape inside a class; returns
  // nullopt when the item was a multi-char escape (already added to `s`).
  std::optional<char32_t> parse_class_char(CharSet& s, bool& was_escape) {
    char32_t c = take();
    was_escape = false;
    if (c == U'\\') {
      was_escape = true;
      CharSet scratch;
      auto single = parse_escape(scratch);
      if (!single) {
        for (auto& p : scratch.predicates) s.predicates.push_back(p);
        return std::nullopt;
      }
      return single;
    }
    if (c == U'[') fail("unescaped '[' in character class");
    return c;
  }

  // Called after '['. Returns the set index; consumes the closing ']'.
  int parse_class_body() {
    CharSet s;
    if (peek() == U'^') {
      s.negated = true;
      ++pos_;
    }
    bool first = true;
    for (;;) {
      if (at_end()) fail("unterminated character class");
      char32_t c = peek();
      if (c == U']') {
        if (first) fail("empty character class");
        ++pos_;
        break;
      }
      if (c == U'-' && peek(1) == U'[') {
        if (first) fail("subtraction without a base group");
        pos_ += 2;
        int sub = parse_class_body();
        s.subtract = sub;
        if (take() != U']') fail("subtraction must end the character class");
        break;
      }
      if (c == U'-' && !first && peek(1) != U']') fail("'-' must be escaped here");
      bool was_escape = false;
      auto lo = parse_class_char(s, was_escape);
      first = false;
      if (!lo) continue;
      if (peek() == U'-' && peek(1) != U']' && peek(1) != U'[') {
        ++pos_;
        bool hi_escape = false;
        auto hi = parse_class_char(s, hi_escape);
        if (!hi) fail("range end must be a single character");
        if (*hi < *lo) fail("range out of order");
        s.ranges.emplace_back(*lo, *hi);
      } else {
        s.ranges.emplace_back(*lo, *lo);
      }
    }
    return add_set(std::move(s));
  }

  std::u32string p_;
  std::size_t pos_ = 0;
  XsdPattern::Program& prog_;
};

// Thompson construction. Dangling exits are recorded as (state, slot) so
// they survive reallocation of the state vector.
struct Fragment {
  int start;
  std::vector<std::pair<int, int>> exits;
};

class Compiler {
 public:
  explicit Compiler(XsdPattern::Program& prog) : prog_(prog) {}

  Fragment compile(const Node& n) {
    switch (n.kind) {
      case Node::empty: return epsilon();
      case Node::atom: {
        int s = add({State::character, n.set});
        return {s, {{s, 0}}};
      }
      case Node::concat: {
        Fragment f = compile(n.kids.front());
        for (std::size_t i = 1; i < n.kids.size(); ++i) f = chain(std::move(f), compile(n.kids[i]));
        return f;
      }
      case Node::alt: {
        Fragment f = compile(n.kids.front());
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          Fragment g = compile(n.kids[i]);
          int s = add({State::split, -1, f.start, g.start});
          f.exits.insert(f.exits.end(), g.exits.begin(), g.exits.end());
          f.start = s;
        }
        return f;
      }
      case Node::repeat: return repeat(n.kids.front(), n.min, n.max);
    }
    return epsilon();
  }

  void patch(const Fragment& f, int target) {
    for (auto [s, slot] : f.exits) {
      auto& st = prog_.states[static_cast<std::size_t>(s)];
      (slot == 0 ? st.out : st.out1) = target;
    }
  }

  int add(State s) {
    prog_.states.push_back(s);
    return static_cast<int>(prog_.states.size() - 1);
  }

 private:
  Fragment epsilon() {
    int s = add({State::split, -1, -1, -1});
    // A split with only one exit acts as an epsilon edge.
    return {s, {{s, 0}}};
  }

  Fragment chain(Fragment a, Fragment b) {
    patch(a, b.start);
    return {a.start, std::move(b.exits)};
  }

  Fragment star(const Node& body) {
    Fragment f = compile(body);
    int s = add({State::split, -1, f.start, -1});
    patch(f, s);
    return {s, {{s, 1}}};
  }

  Fragment optional(const Node& body) {
    Fragment f = compile(body);
    int s = add({State::split, -1, f.start, -1});
    f.exits.emplace_back(s, 1);
    f.start = s;
    return f;
  }

  Fragment repeat(const Node& body, int min, int max) {
    Fragment f = epsilon();
    for (int i = 0; i < min; ++i) f = chain(std::move(f), compile(body));
    if (max == -1) return chain(std::move(f), star(body));
    // x{n,m} tail: (x(x(x)?)?)? built inside-out.
    int extra = max - min;
    if (extra == 0) return f;
    Fragment tail = optional(body);
    for (int i = 1; i < extra; ++i) {
      Fragment inner = compile(body);
      inner = chain(std::move(inner), std::move(tail));
      int s = add({State::split, -1, inner.start, -1});
      inner.exits.emplace_back(s, 1);
      inner.start = s;
      tail = std::move(inner);
    }
    return chain(std::move(f), std::move(tail));
  }

  XsdPattern::Program& prog_;
};

void add_state(const XsdPattern::Program& prog, std::vector<int>& list, std::vector<unsigned>& mark,
               unsigned generation, int s) {
  std::vector<int> stack{s};
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    if (cur < 0 || mark[static_cast<std::size_t>(cur)] == generation) continue;
    mark[static_cast<std::size_t>(cur)] = generation;
    const State& st = prog.states[static_cast<std::size_t>(cur)];
    if (st.kind == State::split) {
      stack.push_back(st.out1);
      stack.push_back(st.out);
    } else {
      list.push_back(cur);
    }
  }
}

}  // namespace

bool is_xsd_word_char(char32_t cp) {
  std::uint32_t mask = U_MASK(u_charType(static_cast<UChar32>(cp)));
  return (mask & (U_GC_P_MASK | U_GC_Z_MASK | U_GC_C_MASK)) == 0;
}

bool is_xsd_digit(char32_t cp) { return u_charType(static_cast<UChar32>(cp)) == U_DECIMAL_DIGIT_NUMBER; }

XsdPattern::XsdPattern(std::string source, std::shared_ptr<const Program> program)
    : source_(std::move(source)), program_(std::move(program)) {}

XsdPattern XsdPattern::compile(std::string_view pattern) {
  auto decoded = decode_utf8(pattern);
  if (!decoded) throw Error(Errc::bad_pattern, "pattern is not valid UTF-8");
  auto prog = std::make_shared<Program>();
  Node root = Parser(std::move(*decoded), *prog).parse();
  Compiler c(*prog);
  Fragment f = c.compile(root);
  int accept = c.add({State::match});
  c.patch(f, accept);
  prog->start = f.start;
  return XsdPattern(std::string(pattern), std::move(prog));
}

bool XsdPattern::matches(std::string_view value) const {
  auto input = decode_utf8(value);
  if (!input) return false;
  const Program& prog = *program_;
  std::vector<unsigned> mark(prog.states.size(), 0);
  unsigned generation = 1;
  std::vector<int> current, next;
  add_state(prog, current, mark, generation, prog.start);
  for (char32_t c : *input) {
    ++generation;
    next.clear();
    for (int s : current) {
      const State& st = prog.states[static_cast<std::size_t>(s)];
      if (st.kind == State::character && prog.set_contains(st.set, c))
        add_state(prog, next, mark, generation, st.out);
    }
    std::swap(current, next);
    if (current.empty()) return false;
  }
  for (int s : current)
    if (prog.states[static_cast<std::size_t>(s)].kind == State::match) return true;
  return false;
}

}  // namespace wsext
