#include "esp/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <optional>
#include <queue>
#include <set>

#include "esp/kb_io.hpp"

namespace esp {

namespace {

namespace fs = std::filesystem;
using lex::Token;
using lex::TokenKind;

struct RawFunction {
  std::string name;
  std::string id;
  int line_begin = 0;
  int line_end = 0;
  std::size_t body_begin = 0;  // token index after '{'
  std::size_t body_end = 0;    // token index of the matching '}'
};

struct Annotation {
  RequirementSet requirements;
  double weight = 1.0;
  std::optional<std::string> id;
  std::string variable;  // var pragmas only
  int line_begin = 0;
  int line_end = 0;
};

struct FileScan {
  const SourceFile* file = nullptr;
  lex::LexedFile lexed;
  std::vector<RawFunction> functions;
  std::vector<Annotation> regions;
  std::vector<Annotation> variables;
};

[[noreturn]] void grammar_error(const std::string& file, int line, const std::string& msg) {
  throw Error(Error::Kind::grammar, file + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<RawFunction> find_functions(const std::vector<Token>& toks) {
  std::vector<RawFunction> out;
  std::size_t decl_start = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.kind == TokenKind::punct && t.text == ";") {
      decl_start = i + 1;
      continue;
    }
    if (!(t.kind == TokenKind::punct && t.text == "{")) continue;

    // Matching close brace for this top-level block.
    std::size_t close = i;
    for (int depth = 0; close < toks.size(); ++close) {
      if (toks[close].kind != TokenKind::punct) continue;
      if (toks[close].text == "{") ++depth;
      else if (toks[close].text == "}" && --depth == 0) break;
    }
    if (close >= toks.size()) close = toks.size() - 1;

    bool is_function = false;
    std::size_t name_idx = 0;
    if (i > 0 && toks[i - 1].kind == TokenKind::punct && toks[i - 1].text == ")") {
      std::size_t j = i - 1;
      for (int depth = 0;; --j) {
        if (toks[j].kind == TokenKind::punct) {
          if (toks[j].text == ")") ++depth;
          else if (toks[j].text == "(" && --depth == 0) break;
        }
        if (j == 0) break;
      }
      if (j > 0 && toks[j - 1].kind == TokenKind::identifier && j - 1 >= decl_start) {
        is_function = true;
        name_idx = j - 1;
      }
    }
    if (is_function) {
      RawFunction f;
      f.name = toks[name_idx].text;
      f.id = f.name;
      f.line_begin = toks[std::min(decl_start, name_idx)].line;
      f.line_end = toks[close].line;
      f.body_begin = i + 1;
      f.body_end = close;
      out.push_back(std::move(f));
    }
    i = close;
    // A struct/union/enum body is usually followed by declarators and ';'.
    decl_start = is_function ? close + 1 : decl_start;
  }
  return out;
}

void parse_pragma_args(const std::string& args, const std::string& file, int line, Annotation& a,
                       bool variable) {
  std::size_t pos = 0;
  bool first = true;
  while (pos <= args.size()) {
    auto comma = args.find(',', pos);
    std::string item = trim(std::string_view(args).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    pos = comma == std::string::npos ? args.size() + 1 : comma + 1;
    if (item.empty()) grammar_error(file, line, "empty argument in esp pragma");
    if (variable && first) {
      if (!std::all_of(item.begin(), item.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }) ||
          std::isdigit(static_cast<unsigned char>(item.front())))
        grammar_error(file, line, "expected an identifier, got '" + item + "'");
      a.variable = item;
      first = false;
      continue;
    }
    first = false;
    if (auto eq = item.find('='); eq != std::string::npos) {
      std::string key = trim(item.substr(0, eq));
      std::string value = trim(item.substr(eq + 1));
      if (key == "weight") {
        double w = 0;
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), w);
        if (ec != std::errc{} || ptr != value.data() + value.size() || !(w > 0) || !std::isfinite(w))
          grammar_error(file, line, "weight must be a positive number, got '" + value + "'");
        a.weight = w;
      } else if (key == "id" && !variable) {
        if (value.empty()) grammar_error(file, line, "empty id");
        a.id = value;
      } else {
        grammar_error(file, line, "unknown pragma argument '" + key + "'");
      }
      continue;
    }
    auto req = parse_requirement(item);
    if (!req) grammar_error(file, line, "unknown requirement '" + item + "'");
    a.requirements.insert(*req);
  }
  if (variable && a.variable.empty()) grammar_error(file, line, "var pragma needs an identifier");
  if (a.requirements.empty()) grammar_error(file, line, "esp pragma needs at least one requirement");
}

FileScan scan_file(const SourceFile& file) {
  FileScan scan;
  scan.file = &file;
  scan.lexed = lex::tokenize(file.text);
  scan.functions = find_functions(scan.lexed.tokens);

  std::vector<Annotation> open;
  for (const auto& d : scan.lexed.directives) {
    std::string_view text = d.text;
    if (!text.starts_with("pragma")) continue;
    std::string rest = trim(text.substr(6));
    if (!(rest.starts_with("esp") && (rest.size() == 3 || std::isspace(static_cast<unsigned char>(rest[3])))))
      continue;
    rest = trim(std::string_view(rest).substr(3));

    auto call_args = [&](std::string_view s, std::string_view keyword) -> std::optional<std::string> {
      if (!s.starts_with(keyword)) return std::nullopt;
      std::string tail = trim(s.substr(keyword.size()));
      if (tail.empty() || tail.front() != '(' || tail.back() != ')')
        grammar_error(file.path, d.line, "expected '" + std::string(keyword) + "(...)'");
      return tail.substr(1, tail.size() - 2);
    };

    if (rest.starts_with("asset")) {
      std::string verb = trim(std::string_view(rest).substr(5));
      if (verb == "end") {
        if (open.empty()) grammar_error(file.path, d.line, "'asset end' without matching 'asset begin'");
        Annotation a = std::move(open.back());
        open.pop_back();
        a.line_end = d.line;
        scan.regions.push_back(std::move(a));
      } else if (auto args = call_args(verb, "begin")) {
        Annotation a;
        a.line_begin = d.line;
        parse_pragma_args(*args, file.path, d.line, a, false);
        open.push_back(std::move(a));
      } else {
        grammar_error(file.path, d.line, "expected 'asset begin(...)' or 'asset end'");
      }
    } else if (auto args = call_args(rest, "var")) {
      Annotation a;
      a.line_begin = a.line_end = d.line;
      parse_pragma_args(*args, file.path, d.line, a, true);
      scan.variables.push_back(std::move(a));
    } else {
      grammar_error(file.path, d.line, "unknown esp pragma '" + rest + "'");
    }
  }
  if (!open.empty())
    grammar_error(file.path, open.back().line_begin, "'asset begin' without matching 'asset end'");
  std::sort(scan.regions.begin(), scan.regions.end(),
            [](const Annotation& a, const Annotation& b) { return a.line_begin < b.line_begin; });
  return scan;
}

bool is_operator_keyword(std::string_view w) {
  static const std::set<std::string_view> kOps{"if",     "else",  "for",     "while", "do",
                                               "switch", "case",  "default", "return", "break",
                                               "continue", "goto", "sizeof"};
  return kOps.contains(w);
}

bool is_delimiter(std::string_view p) {
  return p == ";" || p == "," || p == "{" || p == "}" || p == "(" || p == ")" || p == "[" || p == "]";
}

std::span<const Token> tokens_in_lines(const std::vector<Token>& toks, int begin, int end) {
  auto lo = std::lower_bound(toks.begin(), toks.end(), begin, [](const Token& t, int l) { return t.line < l; });
  auto hi = std::upper_bound(lo, toks.end(), end, [](int l, const Token& t) { return l < t.line; });
  return {toks.data() + (lo - toks.begin()), std::size_t(hi - lo)};
}

std::set<std::string> called_names(std::span<const Token> toks, const std::set<std::string>& declared) {
  std::set<std::string> out;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i)
    if (toks[i].kind == TokenKind::identifier && toks[i + 1].kind == TokenKind::punct && toks[i + 1].text == "(" &&
        declared.contains(toks[i].text))
      out.insert(toks[i].text);
  return out;
}

struct ScannedSet {
  std::vector<FileScan> files;
  std::set<std::string> function_names;
  // name -> ids, with the file that defines each id
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> by_name;

  std::vector<std::string> resolve(const std::string& name, const std::string& from_file) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) return {};
    for (const auto& [id, file] : it->second)
      if (file == from_file) return {id};
    std::vector<std::string> ids;
    for (const auto& [id, file] : it->second) ids.push_back(id);
    return ids;
  }
};

ScannedSet scan_all(std::span<const SourceFile> files) {
  ScannedSet set;
  set.files.resize(files.size());
  std::vector<std::exception_ptr> errors(files.size());
  const long n = long(files.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      set.files[std::size_t(i)] = scan_file(files[std::size_t(i)]);
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::map<std::string, int> name_count;
  for (const auto& fs : set.files)
    for (const auto& f : fs.functions) ++name_count[f.name];
  for (auto& fs : set.files)
    for (auto& f : fs.functions) {
      if (name_count[f.name] > 1) f.id = fs.file->path + ":" + f.name;
      set.function_names.insert(f.name);
      set.by_name[f.name].emplace_back(f.id, fs.file->path);
    }
  return set;
}

const RawFunction* enclosing_function(const FileScan& fs, int line) {
  for (const auto& f : fs.functions)
    if (f.line_begin <= line && line <= f.line_end) return &f;
  return nullptr;
}

MetricVector metrics_for(const ApplicationPart& part, const FileScan& fs, const ScannedSet& set,
                         const CallGraph* cg) {
  MetricVector m;
  const auto& toks = fs.lexed.tokens;
  if (part.kind == PartKind::variable) {
    m[Metric::sloc] = 1;
    std::span<const Token> scope = toks;
    if (part.parent)
      for (const auto& f : fs.functions)
        if (f.id == *part.parent) scope = std::span(toks).subspan(f.body_begin, f.body_end - f.body_begin);
    m[Metric::operand_count] = double(std::count_if(scope.begin(), scope.end(), [&](const Token& t) {
      return t.kind == TokenKind::identifier && t.text == part.name;
    }));
    return m;
  }

  std::span<const Token> body;
  if (part.kind == PartKind::function) {
    for (const auto& f : fs.functions)
      if (f.id == part.id) body = std::span(toks).subspan(f.body_begin, f.body_end - f.body_begin);
  } else {
    body = tokens_in_lines(toks, part.span.line_begin, part.span.line_end);
  }
  m[Metric::sloc] = fs.lexed.count_code_lines(part.span.line_begin, part.span.line_end);
  m[Metric::cyclomatic] = cyclomatic_complexity(body);
  auto h = halstead_counts(body);
  m[Metric::halstead_volume] = h.volume();
  m[Metric::operand_count] = h.total_operands;
  if (part.kind == PartKind::function && cg) {
    m[Metric::call_fanout] = double(cg->out_degree(part.id));
  } else {
    std::set<std::string> callees;
    for (const auto& name : called_names(body, set.function_names))
      for (auto& id : set.resolve(name, fs.file->path)) callees.insert(id);
    m[Metric::call_fanout] = double(callees.size());
  }
  return m;
}

CallGraph call_graph_of(const ScannedSet& set) {
  CallGraph cg;
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& fs : set.files)
    for (const auto& f : fs.functions) {
      cg.nodes.push_back(f.id);
      auto body = std::span(fs.lexed.tokens).subspan(f.body_begin, f.body_end - f.body_begin);
      for (const auto& name : called_names(body, set.function_names))
        for (auto& callee : set.resolve(name, fs.file->path)) edges.emplace(f.id, callee);
    }
  cg.edges.assign(edges.begin(), edges.end());
  return cg;
}

}  // namespace

std::size_t CallGraph::out_degree(std::string_view node) const {
  return std::size_t(std::count_if(edges.begin(), edges.end(), [&](const auto& e) { return e.first == node; }));
}

std::vector<SourceFile> read_sources(const fs::path& root) {
  std::vector<SourceFile> out;
  if (!fs::is_directory(root)) throw Error(Error::Kind::io, "source root '" + root.string() + "' is not a directory");
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension();
    if (ext != ".c" && ext != ".h") continue;
    out.push_back({fs::relative(entry.path(), root).generic_string(), read_text_file(entry.path())});
  }
  std::sort(out.begin(), out.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
  if (out.empty()) throw Error(Error::Kind::io, "no .c/.h files under '" + root.string() + "'");
  return out;
}

int cyclomatic_complexity(std::span<const lex::Token> tokens) {
  int decisions = 0;
  for (const auto& t : tokens) {
    if (t.kind == TokenKind::keyword && (t.text == "if" || t.text == "for" || t.text == "while" || t.text == "case"))
      ++decisions;
    else if (t.kind == TokenKind::punct && (t.text == "&&" || t.text == "||" || t.text == "?"))
      ++decisions;
  }
  return 1 + decisions;
}

HalsteadCounts halstead_counts(std::span<const lex::Token> tokens) {
  std::set<std::string> ops, opnds;
  HalsteadCounts h;
  for (const auto& t : tokens) {
    switch (t.kind) {
      case TokenKind::identifier:
      case TokenKind::number:
      case TokenKind::string:
      case TokenKind::character:
        ++h.total_operands;
        opnds.insert(t.text);
        break;
      case TokenKind::keyword:
        if (is_operator_keyword(t.text)) {
          ++h.total_operators;
          ops.insert(t.text);
        }
        break;
      case TokenKind::punct:
        if (!is_delimiter(t.text)) {
          ++h.total_operators;
          ops.insert(t.text);
        }
        break;
    }
  }
  h.distinct_operators = int(ops.size());
  h.distinct_operands = int(opnds.size());
  return h;
}

double HalsteadCounts::volume() const {
  int vocabulary = distinct_operators + distinct_operands;
  if (vocabulary < 2) return 0.0;
  return double(total_operators + total_operands) * std::log2(double(vocabulary));
}

ApplicationModel scan_files(std::span<const SourceFile> files) {
  ScannedSet set = scan_all(files);
  ApplicationModel app;

  // Primary assets keyed by part id; merged when several annotations hit one part.
  std::map<std::string, Asset> assets;
  auto add_asset = [&](const std::string& part, const Annotation& a) {
    auto [it, fresh] = assets.try_emplace(part, Asset{part, a.requirements, a.weight, AssetRole::primary});
    if (!fresh) {
      it->second.requirements |= a.requirements;
      it->second.weight = std::max(it->second.weight, a.weight);
    }
  };

  struct PendingPart {
    ApplicationPart part;
    const FileScan* scan;
  };
  std::vector<PendingPart> pending;

  for (const auto& fs : set.files) {
    const std::string& path = fs.file->path;
    for (const auto& f : fs.functions) {
      ApplicationPart p;
      p.id = f.id;
      p.kind = PartKind::function;
      p.name = f.name;
      p.span = {path, f.line_begin, f.line_end};
      pending.push_back({std::move(p), &fs});
    }
    for (const auto& r : fs.regions) {
      const RawFunction* inside = nullptr;
      std::vector<const RawFunction*> enclosed;
      for (const auto& f : fs.functions) {
        if (r.line_end < f.line_begin || r.line_begin > f.line_end) continue;
        if (r.line_begin > f.line_begin && r.line_end < f.line_end) {
          inside = &f;
        } else if (r.line_begin < f.line_begin && r.line_end > f.line_end) {
          enclosed.push_back(&f);
        } else {
          grammar_error(path, r.line_begin,
                        "annotated region (lines " + std::to_string(r.line_begin) + "-" + std::to_string(r.line_end) +
                            ") overlaps function '" + f.name + "' without nesting");
        }
      }
      if (!inside && !enclosed.empty()) {
        for (const auto* f : enclosed) add_asset(f->id, r);
        continue;
      }
      ApplicationPart p;
      p.kind = PartKind::code_region;
      if (inside) p.parent = inside->id;
      p.id = r.id.value_or((inside ? inside->id : path) + "@L" + std::to_string(r.line_begin));
      p.name = p.id;
      p.span = {path, r.line_begin, r.line_end};
      add_asset(p.id, r);
      pending.push_back({std::move(p), &fs});
    }
    // Overlap between annotated regions: the begin/end stack guarantees nesting.
    for (const auto& v : fs.variables) {
      const RawFunction* scope = enclosing_function(fs, v.line_begin);
      ApplicationPart p;
      p.kind = PartKind::variable;
      p.name = v.variable;
      p.id = scope ? scope->id + "." + v.variable : v.variable;
      if (scope) p.parent = scope->id;
      // The declaration is the closest mention in the same scope, preferring
      // the one just above the pragma.
      int before = 0, after = 0;
      for (const auto& t : fs.lexed.tokens) {
        if (t.kind != TokenKind::identifier || t.text != v.variable) continue;
        if (enclosing_function(fs, t.line) != scope) continue;
        if (t.line < v.line_begin) before = t.line;
        else if (!after) after = t.line;
      }
      const int line = before ? before : (after ? after : v.line_begin);
      p.span = {path, line, line};
      add_asset(p.id, v);
      pending.push_back({std::move(p), &fs});
    }
  }

  // Disambiguate clashing non-function ids by file prefix.
  std::map<std::string, int> id_count;
  for (const auto& pp : pending) ++id_count[pp.part.id];
  for (auto& pp : pending) {
    if (pp.part.kind == PartKind::function || id_count[pp.part.id] < 2) continue;
    auto node = assets.extract(pp.part.id);
    pp.part.id = pp.scan->file->path + ":" + pp.part.id;
    if (!node.empty()) {
      node.key() = pp.part.id;
      node.mapped().part = pp.part.id;
      assets.insert(std::move(node));
    }
  }

  std::stable_sort(pending.begin(), pending.end(), [](const PendingPart& a, const PendingPart& b) {
    return std::tie(a.part.span.file, a.part.span.line_begin, a.part.kind, a.part.id) <
           std::tie(b.part.span.file, b.part.span.line_begin, b.part.kind, b.part.id);
  });

  CallGraph cg = call_graph_of(set);
  for (auto& pp : pending) {
    pp.part.metrics = metrics_for(pp.part, *pp.scan, set, &cg);
    app.parts.push_back(std::move(pp.part));
  }
  for (const auto& p : app.parts)
    if (auto it = assets.find(p.id); it != assets.end()) app.assets.push_back(it->second);
  app.call_edges = cg.edges;

  // Adjacency: lexically consecutive, non-overlapping siblings (same file, same parent).
  std::map<std::pair<std::string, std::string>, std::vector<const ApplicationPart*>> siblings;
  for (const auto& p : app.parts)
    if (p.kind != PartKind::variable) siblings[{p.span.file, p.parent.value_or("")}].push_back(&p);
  for (const auto& [key, group] : siblings) {
    const ApplicationPart* prev = nullptr;
    for (const auto* p : group) {
      if (prev && prev->span.line_end < p->span.line_begin) app.adjacency.emplace_back(prev->id, p->id);
      if (!prev || p->span.line_end > prev->span.line_end) prev = p;
    }
  }
  throw_on_error(validate_app(app));
  return app;
}

ApplicationModel scan_sources(const fs::path& root) {
  auto files = read_sources(root);
  return scan_files(files);
}

CallGraph build_call_graph(const ApplicationModel& app, std::span<const SourceFile> files) {
  ScannedSet set = scan_all(files);
  CallGraph cg = call_graph_of(set);
  // Keep only functions the model knows about, in model order.
  std::set<std::string> known;
  for (const auto& p : app.parts)
    if (p.kind == PartKind::function) known.insert(p.id);
  std::erase_if(cg.edges, [&](const auto& e) { return !known.contains(e.first) || !known.contains(e.second); });
  cg.nodes.clear();
  for (const auto& p : app.parts)
    if (p.kind == PartKind::function) cg.nodes.push_back(p.id);
  return cg;
}

std::vector<Asset> derive_secondary_assets(const ApplicationModel& app, const CallGraph& cg, int max_distance,
                                           double factor) {
  std::map<std::string, std::vector<std::string>> callers;
  for (const auto& [from, to] : cg.edges) callers[to].push_back(from);

  std::set<std::string> functions, primary_parts;
  for (const auto& p : app.parts)
    if (p.kind == PartKind::function) functions.insert(p.id);
  for (const auto& a : app.assets)
    if (a.role == AssetRole::primary) primary_parts.insert(a.part);

  std::map<std::string, Asset> derived;
  for (const auto& a : app.assets) {
    if (a.role != AssetRole::primary) continue;
    const ApplicationPart* part = app.find_part(a.part);
    if (!part) continue;
    std::string home = part->kind == PartKind::function ? part->id : part->parent.value_or("");
    if (!functions.contains(home)) continue;

    std::map<std::string, int> dist{{home, 0}};
    std::queue<std::string> frontier;
    frontier.push(home);
    while (!frontier.empty()) {
      auto cur = frontier.front();
      frontier.pop();
      if (dist[cur] >= max_distance) continue;
      for (const auto& caller : callers[cur]) {
        if (dist.contains(caller)) continue;
        dist[caller] = dist[cur] + 1;
        frontier.push(caller);
        if (primary_parts.contains(caller)) continue;
        auto [it, fresh] = derived.try_emplace(caller, Asset{caller, a.requirements, factor * a.weight, AssetRole::secondary});
        if (!fresh) {
          it->second.requirements |= a.requirements;
          it->second.weight = std::max(it->second.weight, factor * a.weight);
        }
      }
    }
  }

  std::vector<Asset> out;
  for (const auto& p : app.parts)
    if (auto it = derived.find(p.id); it != derived.end()) out.push_back(it->second);
  return out;
}

void attach_secondary_assets(ApplicationModel& app, const CallGraph& cg, int max_distance, double factor) {
  auto derived = derive_secondary_assets(app, cg, max_distance, factor);
  std::erase_if(app.assets, [](const Asset& a) { return a.role == AssetRole::secondary; });
  std::map<std::string, Asset> all;
  for (const auto& a : app.assets) all.emplace(a.part, a);
  for (const auto& a : derived) all.emplace(a.part, a);
  app.assets.clear();
  for (const auto& p : app.parts)
    if (auto it = all.find(p.id); it != all.end()) app.assets.push_back(it->second);
}

MetricVector compute_metrics(const ApplicationPart& part, std::span<const SourceFile> files, const CallGraph& cg) {
  ScannedSet set = scan_all(files);
  for (const auto& fs : set.files)
    if (fs.file->path == part.span.file) return metrics_for(part, fs, set, &cg);
  throw Error(Error::Kind::reference, "part '" + part.id + "' spans unknown file '" + part.span.file + "'");
}

}  // namespace esp
