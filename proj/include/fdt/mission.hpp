#ifndef FDT_MISSION_HPP_
#define FDT_MISSION_HPP_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdt/grid/types.hpp"

namespace fdt::lang {

enum class Verb : std::uint8_t { go_to = 0, pick_up = 1, open = 2, put_next = 3 };

// Relative location, resolved against the agent's starting pose and never
// updated afterwards.
enum class Loc : std::uint8_t { on_your_left = 0, on_your_right = 1, above = 2, below = 3 };

std::string_view verb_phrase(Verb v);
std::string_view loc_phrase(Loc l);

struct ObjectDescriptor {
  bool definite = true;  // "the" vs "a"
  grid::Color color = grid::Color::blue;
  grid::Kind kind = grid::Kind::ball;
  std::optional<Loc> loc;

  bool operator==(const ObjectDescriptor&) const = default;
  std::string render() const;  // e.g. "the yellow ball on your left"
};

struct Clause {
  Verb verb = Verb::go_to;
  ObjectDescriptor target;
  std::optional<ObjectDescriptor> fixed_target;  // put_next only

  bool operator==(const Clause&) const = default;
  std::string render() const;
};

struct MissionSpec {
  std::string raw;
  std::vector<Clause> clauses;

  bool operator==(const MissionSpec&) const = default;
  const Clause& clause() const { return clauses.front(); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, const std::string& token)
      : std::runtime_error(message + " (at token \"" + token + "\")"), token_(token) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

MissionSpec make_mission(Clause clause);

// Exact inverse of Clause::render; throws ParseError on anything outside
// the mission grammar.
MissionSpec parse_mission(const std::string& raw);

}  // namespace fdt::lang

#endif  // FDT_MISSION_HPP_
