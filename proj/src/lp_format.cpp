#include "wmforge/lp_format.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "wmforge/errors.hpp"

namespace wmforge {

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_expr(std::ostream& out, const MipModel& m, const std::vector<Term>& terms) {
  if (terms.empty()) {
    out << " 0 " << m.variables().front().name;
    return;
  }
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto& t = terms[k];
    if (k > 0 && k % 8 == 0) out << "\n  ";
    const double a = std::abs(t.coef);
    out << (t.coef < 0 ? " - " : (k == 0 ? " " : " + "));
    if (a != 1.0) out << num(a) << ' ';
    out << m.variables()[t.var].name;
  }
}

const char* sense_str(RowSense s) {
  switch (s) {
    case RowSense::le: return "<=";
    case RowSense::ge: return ">=";
    case RowSense::eq: return "=";
  }
  return "=";
}

}  // namespace

void write_lp(const MipModel& model, std::ostream& out) {
  model.validate();
  if (model.num_variables() == 0) throw InputError("cannot export a model without variables");
  out << "\\ wmforge LP export\n";
  out << (model.objective_sense() == ObjSense::minimize ? "Minimize\n" : "Maximize\n");
  out << " obj:";
  write_expr(out, model, model.objective());
  out << "\nSubject To\n";
  for (const auto& r : model.constraints()) {
    out << ' ' << r.name << ':';
    write_expr(out, model, r.terms);
    out << ' ' << sense_str(r.sense) << ' ' << num(r.rhs) << '\n';
  }
  out << "Bounds\n";
  for (const auto& v : model.variables()) {
    if (std::isinf(v.lb) && std::isinf(v.ub)) {
      out << ' ' << v.name << " free\n";
    } else if (v.lb == v.ub) {
      out << ' ' << v.name << " = " << num(v.lb) << '\n';
    } else {
      out << ' ' << num(v.lb) << " <= " << v.name << " <= " << num(v.ub) << '\n';
    }
  }
  bool any_bin = false;
  for (const auto& v : model.variables()) any_bin |= v.kind == VarKind::binary;
  if (any_bin) {
    out << "Binaries\n";
    std::size_t k = 0;
    for (const auto& v : model.variables()) {
      if (v.kind != VarKind::binary) continue;
      out << (k % 10 == 0 ? (k ? "\n " : " ") : " ") << v.name;
      ++k;
    }
    out << '\n';
  }
  out << "End\n";
}

std::string to_lp_string(const MipModel& model) {
  std::ostringstream s;
  write_lp(model, s);
  return s.str();
}

void export_lp(const MipModel& model, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  write_lp(model, f);
  if (!f) throw IoError("failed writing " + path.string());
}

// ------------------------------------------------------------------ reader

namespace {

enum class Section { none, objective, constraints, bounds, binaries, end };

struct Tok {
  enum Kind { name, number, op, colon } kind;
  std::string text;
  double value = 0.0;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_name_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || std::string_view("_!\"#$%&()/,;?@`'{}|~[]").find(c) !=
                                                               std::string_view::npos;
}
bool is_name_char(char c) { return is_name_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '.'; }

std::vector<Tok> tokenize_line(const std::string& line) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '\\') {
      break;
    } else if (c == ':') {
      out.push_back({Tok::colon, ":"});
      ++i;
    } else if (c == '<' || c == '>' || c == '=') {
      std::string op(1, c);
      ++i;
      if (i < line.size() && line[i] == '=') {
        op += '=';
        ++i;
      }
      if (op == "=<") op = "<=";
      if (op == "=>") op = ">=";
      if (op == "<") op = "<=";
      if (op == ">") op = ">=";
      out.push_back({Tok::op, op});
    } else if (c == '+' || c == '-') {
      out.push_back({Tok::op, std::string(1, c)});
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(line.substr(i), &used);
      out.push_back({Tok::number, line.substr(i, used), v});
      i += used;
    } else if (is_name_start(c)) {
      std::size_t j = i;
      while (j < line.size() && is_name_char(line[j])) ++j;
      std::string word = line.substr(i, j - i);
      const auto lw = lower(word);
      if (lw == "inf" || lw == "infinity") {
        out.push_back({Tok::number, word, kInf});
      } else {
        out.push_back({Tok::name, word});
      }
      i = j;
    } else {
      throw IoError(std::string("LP parse error: unexpected character '") + c + "'");
    }
  }
  return out;
}

std::optional<Section> section_header(const std::string& line) {
  std::string t = lower(line);
  t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }), t.end());
  if (t == "minimize" || t == "minimise" || t == "min" || t == "minimum") return Section::objective;
  if (t == "maximize" || t == "maximise" || t == "max" || t == "maximum") return Section::objective;
  if (t == "subjectto" || t == "st" || t == "s.t." || t == "such that" || t == "suchthat") {
    return Section::constraints;
  }
  if (t == "bounds" || t == "bound") return Section::bounds;
  if (t == "binaries" || t == "binary" || t == "bin") return Section::binaries;
  if (t == "generals" || t == "general" || t == "gen" || t == "semi-continuous" || t == "sos") {
    throw IoError("LP section '" + line + "' is not supported");
  }
  if (t == "end") return Section::end;
  return std::nullopt;
}

struct RawRow {
  std::string name;
  std::vector<std::pair<std::string, double>> terms;
  RowSense sense = RowSense::le;
  double rhs = 0.0;
};

struct ParseState {
  std::vector<std::string> appearance;  // first-appearance order
  std::map<std::string, bool> seen;
  void note(const std::string& n) {
    if (!seen[n]) {
      seen[n] = true;
      appearance.push_back(n);
    }
  }
};

// Parses "[name:] expr [sense rhs]" from a token stream.
RawRow parse_linear(const std::vector<Tok>& toks, bool need_rhs, ParseState& st) {
  RawRow row;
  std::size_t i = 0;
  if (toks.size() >= 2 && toks[0].kind == Tok::name && toks[1].kind == Tok::colon) {
    row.name = toks[0].text;
    i = 2;
  }
  double sign = 1.0;
  double coef = 1.0;
  bool have_coef = false;
  for (; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.kind == Tok::op && (t.text == "+" || t.text == "-")) {
      if (t.text == "-") sign = -sign;
    } else if (t.kind == Tok::number) {
      coef = t.value;
      have_coef = true;
    } else if (t.kind == Tok::name) {
      row.terms.emplace_back(t.text, sign * coef);
      st.note(t.text);
      sign = 1.0;
      coef = 1.0;
      have_coef = false;
    } else if (t.kind == Tok::op) {
      row.sense = t.text == "<=" ? RowSense::le : t.text == ">=" ? RowSense::ge : RowSense::eq;
      double rsign = 1.0;
      ++i;
      while (i < toks.size() && toks[i].kind == Tok::op && (toks[i].text == "+" || toks[i].text == "-")) {
        if (toks[i].text == "-") rsign = -rsign;
        ++i;
      }
      if (i >= toks.size() || toks[i].kind != Tok::number) throw IoError("LP parse error: missing rhs");
      row.rhs = rsign * toks[i].value;
      if (i + 1 != toks.size()) throw IoError("LP parse error: trailing tokens after rhs");
      return row;
    } else {
      throw IoError("LP parse error near '" + t.text + "'");
    }
  }
  if (have_coef && coef != 0.0) throw IoError("LP parse error: constant term in expression is not supported");
  if (need_rhs) throw IoError("LP parse error: constraint without sense/rhs");
  return row;
}

}  // namespace

MipModel read_lp(std::istream& in) {
  Section section = Section::none;
  ObjSense sense = ObjSense::minimize;
  ParseState st;
  std::vector<std::pair<std::string, double>> objective;
  std::vector<Tok> pending_obj;
  std::vector<Tok> pending_row;
  std::vector<RawRow> rows;
  std::vector<std::string> bound_order;
  std::map<std::string, std::pair<double, double>> bounds;
  std::vector<std::string> binaries;

  auto flush_obj = [&] {
    if (pending_obj.empty()) return;
    auto r = parse_linear(pending_obj, false, st);
    objective = std::move(r.terms);
    pending_obj.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    if (auto sec = section_header(line)) {
      if (section == Section::objective) flush_obj();
      if (!pending_row.empty()) throw IoError("LP parse error: unterminated constraint");
      if (*sec == Section::objective) {
        const auto l = lower(line);
        sense = l.find("max") != std::string::npos ? ObjSense::maximize : ObjSense::minimize;
      }
      section = *sec;
      if (section == Section::end) break;
      continue;
    }
    auto toks = tokenize_line(line);
    if (toks.empty()) continue;
    switch (section) {
      case Section::objective:
        pending_obj.insert(pending_obj.end(), toks.begin(), toks.end());
        break;
      case Section::constraints: {
        pending_row.insert(pending_row.end(), toks.begin(), toks.end());
        const bool has_sense = std::any_of(pending_row.begin(), pending_row.end(), [](const Tok& t) {
          return t.kind == Tok::op && t.text != "+" && t.text != "-";
        });
        if (has_sense && pending_row.back().kind == Tok::number) {
          rows.push_back(parse_linear(pending_row, true, st));
          pending_row.clear();
        }
        break;
      }
      case Section::bounds: {
        // name free | name op v | v op name [op v]
        auto signed_num = [&](std::size_t& i) {
          double s = 1.0;
          while (i < toks.size() && toks[i].kind == Tok::op && (toks[i].text == "-" || toks[i].text == "+")) {
            if (toks[i].text == "-") s = -s;
            ++i;
          }
          if (i >= toks.size() || toks[i].kind != Tok::number) throw IoError("LP parse error in Bounds: " + line);
          return s * toks[i++].value;
        };
        std::string name;
        double lo = 0.0, hi = kInf;
        bool have_lo = false, have_hi = false;
        std::size_t i = 0;
        if (toks[0].kind == Tok::name) {
          name = toks[0].text;
          i = 1;
          if (i < toks.size() && toks[i].kind == Tok::name && lower(toks[i].text) == "free") {
            lo = -kInf;
            hi = kInf;
            have_lo = have_hi = true;
          } else {
            if (i >= toks.size() || toks[i].kind != Tok::op) throw IoError("LP parse error in Bounds: " + line);
            const auto op = toks[i++].text;
            const double v = signed_num(i);
            if (op == "<=") {
              hi = v;
              have_hi = true;
            } else if (op == ">=") {
              lo = v;
              have_lo = true;
            } else {
              lo = hi = v;
              have_lo = have_hi = true;
            }
          }
        } else {
          const double v = signed_num(i);
          if (i + 1 >= toks.size() || toks[i].kind != Tok::op || toks[i + 1].kind != Tok::name) {
            throw IoError("LP parse error in Bounds: " + line);
          }
          const auto op = toks[i].text;
          name = toks[i + 1].text;
          i += 2;
          if (op == "<=") {
            lo = v;
            have_lo = true;
          } else if (op == ">=") {
            hi = v;
            have_hi = true;
          } else {
            lo = hi = v;
            have_lo = have_hi = true;
          }
          if (i < toks.size()) {
            const auto op2 = toks[i++].text;
            const double v2 = signed_num(i);
            if (op2 == "<=") {
              hi = v2;
              have_hi = true;
            } else {
              lo = v2;
              have_lo = true;
            }
          }
        }
        auto it = bounds.find(name);
        if (it == bounds.end()) {
          bound_order.push_back(name);
          it = bounds.emplace(name, std::pair{0.0, kInf}).first;
        }
        if (have_lo) it->second.first = lo;
        if (have_hi) it->second.second = hi;
        st.note(name);
        break;
      }
      case Section::binaries:
        for (const auto& t : toks) {
          if (t.kind != Tok::name) throw IoError("LP parse error in Binaries: " + line);
          binaries.push_back(t.text);
          st.note(t.text);
        }
        break;
      case Section::none:
        throw IoError("LP parse error: content before objective section");
      case Section::end:
        break;
    }
  }
  if (section == Section::objective) flush_obj();
  if (!pending_row.empty()) throw IoError("LP parse error: unterminated constraint");

  // Variable order: Bounds section first, then first appearance elsewhere.
  std::vector<std::string> order = bound_order;
  std::map<std::string, bool> placed;
  for (const auto& n : order) placed[n] = true;
  for (const auto& n : st.appearance) {
    if (!placed[n]) {
      placed[n] = true;
      order.push_back(n);
    }
  }
  std::map<std::string, bool> is_bin;
  for (const auto& b : binaries) is_bin[b] = true;

  MipModel model;
  for (const auto& n : order) {
    const bool bin = is_bin[n];
    double lo = bin ? 0.0 : 0.0, hi = bin ? 1.0 : kInf;
    if (auto it = bounds.find(n); it != bounds.end()) {
      lo = it->second.first;
      hi = it->second.second;
      if (bin) {
        lo = std::max(lo, 0.0);
        hi = std::min(hi, 1.0);
      }
    }
    model.add_variable(n, bin ? VarKind::binary : VarKind::continuous, lo, hi);
  }
  auto to_terms = [&](const std::vector<std::pair<std::string, double>>& raw) {
    std::vector<Term> terms;
    for (const auto& [n, c] : raw) terms.push_back({*model.find_variable(n), c});
    return terms;
  };
  model.set_objective(to_terms(objective), sense);
  for (const auto& r : rows) model.add_constraint(r.name, to_terms(r.terms), r.sense, r.rhs);
  return model;
}

MipModel parse_lp(const std::string& text) {
  std::istringstream s(text);
  return read_lp(s);
}

MipModel import_lp(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return read_lp(f);
}

}  // namespace wmforge
