#include "fdt/mission.hpp"

#include <sstream>

namespace fdt::lang {

namespace {

using grid::Color;
using grid::Kind;

std::vector<std::string> tokenize(const std::string& raw) {
  std::vector<std::string> tokens;
  std::istringstream in(raw);
  std::string t;
  while (in >> t) tokens.push_back(t);
  return tokens;
}

class TokenStream {
 public:
  explicit TokenStream(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}

  const std::string& peek() const {
    static const std::string kEnd = "<end>";
    return pos_ < tokens_.size() ? tokens_[pos_] : kEnd;
  }
  std::string next(const char* what) {
    if (pos_ >= tokens_.size()) throw ParseError(std::string("expected ") + what, "<end>");
    return tokens_[pos_++];
  }
  void expect(const std::string& word) {
    const std::string t = next(("\"" + word + "\"").c_str());
    if (t != word) throw ParseError("expected \"" + word + "\"", t);
  }
  bool try_consume(const std::string& word) {
    if (pos_ < tokens_.size() && tokens_[pos_] == word) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool done() const { return pos_ == tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

bool parse_article(TokenStream& ts) {
  const std::string t = ts.next("article");
  if (t == "the") return true;
  if (t == "a") return false;
  throw ParseError("expected article \"the\" or \"a\"", t);
}

Color parse_color(TokenStream& ts) {
  const std::string t = ts.next("color");
  try {
    return grid::color_from_name(t);
  } catch (const std::invalid_argument&) {
    throw ParseError("expected a color", t);
  }
}

Kind parse_kind(TokenStream& ts) {
  const std::string t = ts.next("object type");
  try {
    return grid::kind_from_name(t);
  } catch (const std::invalid_argument&) {
    throw ParseError("expected an object type", t);
  }
}

// Loc phrases start with "on", "above" or "below"; "next" is never a loc.
std::optional<Loc> try_parse_loc(TokenStream& ts) {
  if (ts.try_consume("above")) return Loc::above;
  if (ts.try_consume("below")) return Loc::below;
  if (ts.try_consume("on")) {
    ts.expect("your");
    const std::string side = ts.next("side");
    if (side == "left") return Loc::on_your_left;
    if (side == "right") return Loc::on_your_right;
    throw ParseError("expected \"left\" or \"right\"", side);
  }
  return std::nullopt;
}

ObjectDescriptor parse_descriptor(TokenStream& ts, bool allow_loc) {
  ObjectDescriptor d;
  d.definite = parse_article(ts);
  d.color = parse_color(ts);
  d.kind = parse_kind(ts);
  if (allow_loc) d.loc = try_parse_loc(ts);
  return d;
}

}  // namespace

std::string_view verb_phrase(Verb v) {
  switch (v) {
    case Verb::go_to: return "go to";
    case Verb::pick_up: return "pick up";
    case Verb::open: return "open";
    case Verb::put_next: return "put";
  }
  return "?";
}

std::string_view loc_phrase(Loc l) {
  switch (l) {
    case Loc::on_your_left: return "on your left";
    case Loc::on_your_right: return "on your right";
    case Loc::above: return "above";
    case Loc::below: return "below";
  }
  return "?";
}

std::string ObjectDescriptor::render() const {
  std::string s(definite ? "the" : "a");
  s += ' ';
  s += grid::color_name(color);
  s += ' ';
  s += grid::kind_name(kind);
  if (loc) {
    s += ' ';
    s += loc_phrase(*loc);
  }
  return s;
}

std::string Clause::render() const {
  switch (verb) {
    case Verb::go_to: return "go to " + target.render();
    case Verb::pick_up: return "pick up " + target.render();
    case Verb::open: return "open " + target.render();
    case Verb::put_next: return "put " + target.render() + " next to " + fixed_target->render();
  }
  return "?";
}

MissionSpec make_mission(Clause clause) {
  MissionSpec m;
  m.raw = clause.render();
  m.clauses.push_back(std::move(clause));
  return m;
}

MissionSpec parse_mission(const std::string& raw) {
  TokenStream ts(tokenize(raw));
  Clause c;
  const std::string head = ts.next("verb");
  if (head == "go") {
    ts.expect("to");
    c.verb = Verb::go_to;
    c.target = parse_descriptor(ts, true);
  } else if (head == "pick") {
    ts.expect("up");
    c.verb = Verb::pick_up;
    c.target = parse_descriptor(ts, true);
    if (c.target.kind == Kind::door) {
      throw ParseError("pick up cannot target a door", "door");
    }
  } else if (head == "open") {
    c.verb = Verb::open;
    c.target = parse_descriptor(ts, true);
    if (c.target.kind != Kind::door) {
      throw ParseError("open must target a door", std::string(grid::kind_name(c.target.kind)));
    }
  } else if (head == "put") {
    c.verb = Verb::put_next;
    c.target = parse_descriptor(ts, true);
    ts.expect("next");
    ts.expect("to");
    c.fixed_target = parse_descriptor(ts, false);
    if (c.target.kind == Kind::door || c.fixed_target->kind == Kind::door) {
      throw ParseError("put next cannot involve doors", "door");
    }
  } else {
    throw ParseError("unknown instruction verb", head);
  }
  if (!ts.done()) throw ParseError("trailing tokens after mission", ts.peek());

  MissionSpec m;
  m.clauses.push_back(c);
  m.raw = m.clauses.front().render();
  if (m.raw != raw) {
    // Round-trip guard: since the parser only accepts grammar output,
    // re-rendering must reproduce the input exactly.
    throw ParseError("mission string is not in canonical form", raw);
  }
  return m;
}

}  // namespace fdt::lang
