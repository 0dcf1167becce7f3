#include "depflux/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>
#include <sstream>

#include "depflux/equilibrium.hpp"
#include "depflux/error.hpp"

namespace depflux {

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::ostringstream os;
  os << "invalid configuration:";
  for (const auto& e : errors) os << "\n  - " << e;
  return os.str();
}

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { ident, number, string, lbrace, rbrace, lbracket, rbracket, equals, comma, newline, end };

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  int line = 0;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

std::vector<Token> lex(const std::string& s, std::vector<std::string>& errors) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  auto err = [&](const std::string& msg) { errors.push_back("line " + std::to_string(line) + ": " + msg); };
  while (i < s.size()) {
    const char c = s[i];
    if (c == '\n') {
      out.push_back({Tok::newline, "\n", 0.0, line});
      ++line;
      ++i;
    } else if (c == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '{' || c == '}' || c == '[' || c == ']' || c == '=' || c == ',' || c == ';') {
      const Tok k = c == '{' ? Tok::lbrace
                    : c == '}' ? Tok::rbrace
                    : c == '[' ? Tok::lbracket
                    : c == ']' ? Tok::rbracket
                    : c == '=' ? Tok::equals
                    : c == ',' ? Tok::comma
                               : Tok::newline;
      out.push_back({k, std::string(1, c), 0.0, line});
      ++i;
    } else if (c == '"') {
      std::string text;
      ++i;
      bool closed = false;
      while (i < s.size() && s[i] != '\n') {
        if (s[i] == '\\' && i + 1 < s.size()) {
          text += s[i + 1];
          i += 2;
        } else if (s[i] == '"') {
          closed = true;
          ++i;
          break;
        } else {
          text += s[i++];
        }
      }
      if (!closed) err("unterminated string");
      out.push_back({Tok::string, text, 0.0, line});
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '.' || s[j] == '-' ||
                              s[j] == '+'))
        ++j;
      const std::string text = s.substr(i, j - i);
      double v = 0.0;
      const char* b = text.data() + (text[0] == '+' ? 1 : 0);
      const auto [ptr, ec] = std::from_chars(b, text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size())
        err("malformed number '" + text + "'");
      else if (!std::isfinite(v))
        err("non-finite number '" + text + "'");
      out.push_back({Tok::number, text, v, line});
      i = j;
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < s.size() && ident_char(s[j])) ++j;
      out.push_back({Tok::ident, s.substr(i, j - i), 0.0, line});
      i = j;
    } else {
      err(std::string("unexpected character '") + c + "'");
      ++i;
    }
  }
  out.push_back({Tok::end, "", 0.0, line});
  return out;
}

// ---------------------------------------------------------------------------
// Parser into a small tree

struct Node;
using Entries = std::vector<std::pair<std::string, std::shared_ptr<Node>>>;

struct Node {
  enum class Kind { number, string, ident, list, section } kind;
  double number = 0.0;
  std::string text;
  std::vector<Node> items;
  Entries entries;
  int line = 0;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, std::vector<std::string>& errors) : toks_(std::move(toks)), errors_(errors) {}

  Entries parse_entries(bool nested) {
    Entries out;
    for (;;) {
      skip_separators();
      const Token& t = peek();
      if (t.kind == Tok::end) {
        if (nested) error(t, "missing '}'");
        return out;
      }
      if (t.kind == Tok::rbrace) {
        if (!nested) error(t, "unmatched '}'");
        next();
        if (nested) return out;
        continue;
      }
      if (t.kind != Tok::ident) {
        error(t, "expected a key, found '" + t.text + "'");
        recover();
        continue;
      }
      const Token key = next();
      auto node = std::make_shared<Node>();
      node->line = key.line;
      if (peek().kind == Tok::lbrace) {
        next();
        node->kind = Node::Kind::section;
        node->entries = parse_entries(true);
      } else if (peek().kind == Tok::equals) {
        next();
        if (!parse_value(*node)) {
          recover();
          continue;
        }
      } else {
        error(peek(), "expected '=' or '{' after '" + key.text + "'");
        recover();
        continue;
      }
      out.emplace_back(key.text, node);
    }
  }

 private:
  bool parse_value(Node& n) {
    const Token& t = peek();
    n.line = t.line;
    switch (t.kind) {
      case Tok::number:
        n.kind = Node::Kind::number;
        n.number = t.number;
        n.text = t.text;
        next();
        return true;
      case Tok::string:
        n.kind = Node::Kind::string;
        n.text = t.text;
        next();
        return true;
      case Tok::ident:
        n.kind = Node::Kind::ident;
        n.text = t.text;
        next();
        return true;
      case Tok::lbracket: {
        next();
        n.kind = Node::Kind::list;
        for (;;) {
          while (peek().kind == Tok::newline) next();
          if (peek().kind == Tok::rbracket) {
            next();
            return true;
          }
          Node item;
          if (!parse_value(item)) return false;
          n.items.push_back(std::move(item));
          while (peek().kind == Tok::newline) next();
          if (peek().kind == Tok::comma) {
            next();
          } else if (peek().kind != Tok::rbracket) {
            error(peek(), "expected ',' or ']' in list");
            return false;
          }
        }
      }
      default:
        error(t, "expected a value, found '" + t.text + "'");
        return false;
    }
  }

  void skip_separators() {
    while (peek().kind == Tok::newline || peek().kind == Tok::comma) next();
  }
  void recover() {
    while (peek().kind != Tok::newline && peek().kind != Tok::end && peek().kind != Tok::rbrace) next();
  }
  const Token& peek() const { return toks_[pos_]; }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  void error(const Token& t, const std::string& msg) {
    errors_.push_back("line " + std::to_string(t.line) + ": " + msg);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<std::string>& errors_;
};

// ---------------------------------------------------------------------------

std::string where(const Node& n) { return "line " + std::to_string(n.line) + ": "; }

std::string format_number(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"validate",           "stationarity",       "adjoint",
                                              "reversed-flux",      "exact-second-class", "flux-variance",
                                              "covariance-moment",  "second-class-law",   "flux-variance-abs-q",
                                              "second-class-drift", "sum-rule",           "nonnegativity"};
  return names;
}

const std::map<std::string, std::map<std::string, ParamValue>>& model_defaults() {
  static const std::map<std::string, std::map<std::string, ParamValue>> d{
      {"asep", {{"p", 1.0}}},
      {"particle_antiparticle", {{"p", 0.5}, {"c", 0.4}, {"a", 1.0}}},
      {"zero_range", {{"f", std::string("linear")}, {"p", 1.0}, {"beta", 1.0}}},
      {"bricklayers", {{"f", std::string("exponential")}, {"p", 1.0}, {"beta", 1.0}}},
      {"k_exclusion", {{"K", 2.0}}},
  };
  return d;
}

namespace {

void check_model(const ModelConfig& m, std::vector<std::string>& errors) {
  const auto& defaults = model_defaults();
  const auto it = defaults.find(m.name);
  if (it == defaults.end()) {
    errors.push_back("unknown model '" + m.name +
                     "' (expected asep, particle_antiparticle, zero_range, bricklayers or k_exclusion)");
    return;
  }
  for (const auto& [key, value] : m.params) {
    const auto d = it->second.find(key);
    if (d == it->second.end()) {
      errors.push_back("model " + m.name + ": unknown parameter '" + key + "'");
      continue;
    }
    if (value.index() != d->second.index())
      errors.push_back("model " + m.name + ": parameter '" + key + "' must be a " +
                       (d->second.index() == 0 ? "number" : "string"));
  }
}

double num_param(const ModelConfig& m, const std::string& key) {
  const auto it = m.params.find(key);
  const ParamValue& v = it != m.params.end() ? it->second : model_defaults().at(m.name).at(key);
  return std::get<double>(v);
}

std::string str_param(const ModelConfig& m, const std::string& key) {
  const auto it = m.params.find(key);
  const ParamValue& v = it != m.params.end() ? it->second : model_defaults().at(m.name).at(key);
  return std::get<std::string>(v);
}

void check_ranges(const ExperimentConfig& c, std::vector<std::string>& errors) {
  check_model(c.model, errors);
  if (c.theta && c.rho) errors.push_back("both theta and rho are given; keep exactly one");
  if (!c.theta && !c.rho) errors.push_back("one of theta or rho is required");
  if (c.theta && !std::isfinite(*c.theta)) errors.push_back("theta must be finite");
  if (c.rho && !std::isfinite(*c.rho)) errors.push_back("rho must be finite");
  if (c.L < 3) errors.push_back("L must be at least 3");
  if (!(c.t >= 0.0) || !std::isfinite(c.t)) errors.push_back("t must be a finite nonnegative number");
  if (!std::isfinite(c.V)) errors.push_back("V must be finite");
  if (c.replicates < 1) errors.push_back("replicates must be at least 1");
  if (!(c.eps > 0.0 && c.eps <= 1e-6)) errors.push_back("eps must lie in (0, 1e-6]");
  if (c.state_cap < 1) errors.push_back("state_cap must be positive");
  if (c.threads < 1) errors.push_back("threads must be at least 1");
  if (c.oracle_L < 2) errors.push_back("oracle_L must be at least 2");
  if (c.output.empty()) errors.push_back("output must be a nonempty path");
  if (c.checks) {
    const auto& known = known_checks();
    for (const auto& name : *c.checks)
      if (std::find(known.begin(), known.end(), name) == known.end()) errors.push_back("unknown check '" + name + "'");
  }
}

}  // namespace

void validate_config(const ExperimentConfig& config) {
  std::vector<std::string> errors;
  check_ranges(config, errors);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> errors;
  Parser parser(lex(text, errors), errors);
  const Entries entries = parser.parse_entries(false);

  ExperimentConfig c;
  std::set<std::string> seen;
  bool have_model = false;

  auto want_number = [&](const std::string& key, const Node& n) -> std::optional<double> {
    if (n.kind != Node::Kind::number) {
      errors.push_back(where(n) + key + " must be a number");
      return std::nullopt;
    }
    return n.number;
  };
  auto want_count = [&](const std::string& key, const Node& n) -> std::optional<std::uint64_t> {
    if (!want_number(key, n)) return std::nullopt;
    std::uint64_t out = 0;
    const char* first = n.text.data();
    const char* last = first + n.text.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
      errors.push_back(where(n) + key + " must be a nonnegative integer");
      return std::nullopt;
    }
    return out;
  };
  auto want_text = [&](const std::string& key, const Node& n) -> std::optional<std::string> {
    if (n.kind != Node::Kind::string && n.kind != Node::Kind::ident) {
      errors.push_back(where(n) + key + " must be a string");
      return std::nullopt;
    }
    return n.text;
  };

  for (const auto& [key, node] : entries) {
    const Node& n = *node;
    if (!seen.insert(key).second) {
      errors.push_back(where(n) + "duplicate key '" + key + "'");
      continue;
    }
    if (n.kind == Node::Kind::section) {
      if (!model_defaults().count(key)) {
        errors.push_back(where(n) + "unknown section '" + key + "'");
        continue;
      }
      if (have_model) {
        errors.push_back(where(n) + "more than one model section");
        continue;
      }
      have_model = true;
      c.model.name = key;
      std::set<std::string> pseen;
      for (const auto& [pk, pn] : n.entries) {
        if (!pseen.insert(pk).second) {
          errors.push_back(where(*pn) + "duplicate parameter '" + pk + "'");
          continue;
        }
        if (pn->kind == Node::Kind::number)
          c.model.params[pk] = pn->number;
        else if (pn->kind == Node::Kind::string || pn->kind == Node::Kind::ident)
          c.model.params[pk] = pn->text;
        else
          errors.push_back(where(*pn) + "parameter '" + pk + "' must be a number or a string");
      }
      continue;
    }
    if (key == "theta") {
      if (auto v = want_number(key, n)) c.theta = *v;
    } else if (key == "rho") {
      if (auto v = want_number(key, n)) c.rho = *v;
    } else if (key == "L") {
      if (auto v = want_count(key, n)) c.L = static_cast<std::size_t>(*v);
    } else if (key == "t") {
      if (auto v = want_number(key, n)) c.t = *v;
    } else if (key == "V") {
      if (auto v = want_number(key, n)) c.V = *v;
    } else if (key == "replicates") {
      if (auto v = want_count(key, n)) c.replicates = *v;
    } else if (key == "seed") {
      if (auto v = want_count(key, n)) c.seed = *v;
    } else if (key == "eps") {
      if (auto v = want_number(key, n)) c.eps = *v;
    } else if (key == "state_cap") {
      if (auto v = want_count(key, n)) c.state_cap = static_cast<std::size_t>(*v);
    } else if (key == "threads") {
      if (auto v = want_count(key, n)) c.threads = static_cast<std::size_t>(*v);
    } else if (key == "window") {
      if (auto v = want_count(key, n)) c.window = static_cast<std::size_t>(*v);
    } else if (key == "oracle_L") {
      if (auto v = want_count(key, n)) c.oracle_L = static_cast<std::size_t>(*v);
    } else if (key == "output") {
      if (auto v = want_text(key, n)) c.output = *v;
    } else if (key == "checks") {
      if (n.kind != Node::Kind::list) {
        errors.push_back(where(n) + "checks must be a list");
        continue;
      }
      std::vector<std::string> names;
      for (const Node& item : n.items)
        if (auto v = want_text("checks entry", item)) names.push_back(*v);
      c.checks = std::move(names);
    } else {
      errors.push_back(where(n) + "unknown key '" + key + "'");
    }
  }
  if (!have_model) errors.push_back("missing model section (e.g. asep { p = 1 })");
  if (have_model) check_ranges(c, errors);
  else {
    // Still report the rest; the model is just absent.
    std::vector<std::string> rest;
    check_ranges(c, rest);
    for (auto& e : rest)
      if (e.rfind("model", 0) != 0) errors.push_back(std::move(e));
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << c.model.name << " {";
  bool first = true;
  for (const auto& [k, v] : c.model.params) {
    os << (first ? " " : ", ") << k << " = ";
    if (const double* d = std::get_if<double>(&v))
      os << format_number(*d);
    else
      os << quote(std::get<std::string>(v));
    first = false;
  }
  os << (first ? "}" : " }") << "\n";
  if (c.theta) os << "theta = " << format_number(*c.theta) << "\n";
  if (c.rho) os << "rho = " << format_number(*c.rho) << "\n";
  os << "L = " << c.L << "\n";
  os << "t = " << format_number(c.t) << "\n";
  os << "V = " << format_number(c.V) << "\n";
  os << "replicates = " << c.replicates << "\n";
  os << "seed = " << c.seed << "\n";
  if (c.checks) {
    os << "checks = [";
    for (std::size_t i = 0; i < c.checks->size(); ++i) os << (i ? ", " : "") << quote((*c.checks)[i]);
    os << "]\n";
  }
  os << "output = " << quote(c.output) << "\n";
  os << "eps = " << format_number(c.eps) << "\n";
  os << "state_cap = " << c.state_cap << "\n";
  os << "threads = " << c.threads << "\n";
  if (c.window) os << "window = " << *c.window << "\n";
  os << "oracle_L = " << c.oracle_L << "\n";
  return os.str();
}

RateSpec build_spec(const ModelConfig& m) {
  std::vector<std::string> errors;
  check_model(m, errors);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  if (m.name == "asep") return build_asep(num_param(m, "p"));
  if (m.name == "particle_antiparticle")
    return build_particle_antiparticle(num_param(m, "p"), num_param(m, "c"), num_param(m, "a"));
  if (m.name == "zero_range")
    return build_zero_range(RateFamily::parse(str_param(m, "f"), num_param(m, "beta")), num_param(m, "p"));
  if (m.name == "bricklayers")
    return build_bricklayers(RateFamily::parse(str_param(m, "f"), num_param(m, "beta")), num_param(m, "p"));
  const double K = num_param(m, "K");
  if (K != std::floor(K) || K < 1 || K > 1e6) throw ModelError("k_exclusion: K must be a positive integer");
  return build_k_exclusion(static_cast<int>(K));
}

double resolve_theta(const ExperimentConfig& config, const RateSpec& spec) {
  if (config.theta) return *config.theta;
  if (!config.rho) throw ConfigError({"one of theta or rho is required"});
  return solve_theta_for_rho(spec, *config.rho, config.eps);
}

}  // namespace depflux
