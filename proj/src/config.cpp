#include "mfsb/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mfsb/error.hpp"

namespace mfsb {

std::string to_string(WorldSelection w) {
  switch (w) {
    case WorldSelection::Open: return "open";
    case WorldSelection::Closed: return "closed";
    case WorldSelection::Both: return "both";
  }
  return "?";
}

std::optional<WorldSelection> parse_world_selection(std::string_view text) {
  if (text == "open") return WorldSelection::Open;
  if (text == "closed") return WorldSelection::Closed;
  if (text == "both") return WorldSelection::Both;
  return std::nullopt;
}

std::vector<World> worlds(WorldSelection w) {
  switch (w) {
    case WorldSelection::Open: return {World::Open};
    case WorldSelection::Closed: return {World::Closed};
    case WorldSelection::Both: return {World::Open, World::Closed};
  }
  return {};
}

std::string element_list(const std::array<bool, 3>& active) {
  std::string out;
  for (Element e : kElements) {
    if (!active[index(e)]) continue;
    if (!out.empty()) out += ',';
    out += to_string(e);
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::optional<T> parse_number(const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc{} || r.ptr != end) return std::nullopt;
  return v;
}

std::optional<std::array<bool, 3>> parse_elements(const std::string& text) {
  std::array<bool, 3> active{false, false, false};
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    std::optional<Element> e;
    for (Element c : kElements)
      if (item == to_string(c)) e = c;
    if (!e || active[index(*e)]) return std::nullopt;
    active[index(*e)] = true;
  }
  return active;
}

/// One documented key: how to read it from text and how to echo it.
struct Key {
  std::string name;
  std::string expected;
  std::function<bool(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Ref>
Key integer_key(std::string name, Ref ref) {
  using T = std::remove_cvref_t<decltype(ref(std::declval<ExperimentConfig&>()))>;
  return {name, "a non-negative integer",
          [ref](ExperimentConfig& c, const std::string& s) {
            auto v = parse_number<T>(s);
            if (v) ref(c) = *v;
            return v.has_value();
          },
          [ref](const ExperimentConfig& c) { return std::to_string(ref(c)); }};
}

template <class Ref>
Key double_key(std::string name, Ref ref) {
  return {name, "a real number",
          [ref](ExperimentConfig& c, const std::string& s) {
            auto v = parse_number<double>(s);
            if (v) ref(c) = *v;
            return v.has_value();
          },
          [ref](const ExperimentConfig& c) { return format_double(ref(c)); }};
}

Key form_key(Element e) {
  return {"prompt." + to_string(e), "hard, soft or hard_soft",
          [e](ExperimentConfig& c, const std::string& s) {
            auto f = parse_prompt_form(s);
            if (f) c.model.forms[index(e)] = *f;
            return f.has_value();
          },
          [e](const ExperimentConfig& c) { return to_string(c.model.forms[index(e)]); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(integer_key("seed", [](auto& c) -> auto& { return c.seed; }));
    k.push_back(integer_key("space.n_states", [](auto& c) -> auto& { return c.n_states; }));
    k.push_back(integer_key("space.n_objects", [](auto& c) -> auto& { return c.n_objects; }));
    k.push_back(double_key("space.unseen_fraction",
                           [](auto& c) -> auto& { return c.split.unseen_fraction; }));
    k.push_back(integer_key("space.train_per_pair",
                         [](auto& c) -> auto& { return c.split.train_per_pair; }));
    k.push_back(integer_key("space.eval_per_pair",
                         [](auto& c) -> auto& { return c.split.eval_per_pair; }));
    k.push_back(double_key("space.noise_sigma", [](auto& c) -> auto& { return c.noise_sigma; }));
    k.push_back(integer_key("space.d_in", [](auto& c) -> auto& { return c.model.d_in; }));
    k.push_back(integer_key("space.d", [](auto& c) -> auto& { return c.model.d; }));
    for (Element e : kElements) k.push_back(form_key(e));
    k.push_back(integer_key("prompt.prefix_len",
                         [](auto& c) -> auto& { return c.model.prefix_length; }));
    k.push_back({"elements", "a comma-separated subset of pair, attr, obj",
                 [](ExperimentConfig& c, const std::string& s) {
                   auto a = parse_elements(s);
                   if (a) c.model.active = *a;
                   return a.has_value();
                 },
                 [](const ExperimentConfig& c) { return element_list(c.model.active); }});
    k.push_back({"fusion.order", "none, intra, inter, intra_inter or inter_intra",
                 [](ExperimentConfig& c, const std::string& s) {
                   auto o = parse_fusion_order(s);
                   if (o) c.model.fusion.order = *o;
                   return o.has_value();
                 },
                 [](const ExperimentConfig& c) { return to_string(c.model.fusion.order); }});
    k.push_back({"fusion.intra_semantics", "equations or prose",
                 [](ExperimentConfig& c, const std::string& s) {
                   auto v = parse_intra_semantics(s);
                   if (v) c.model.fusion.intra_semantics = *v;
                   return v.has_value();
                 },
                 [](const ExperimentConfig& c) { return to_string(c.model.fusion.intra_semantics); }});
    k.push_back(integer_key("fusion.n_heads", [](auto& c) -> auto& { return c.model.n_heads; }));
    k.push_back(double_key("alpha", [](auto& c) -> auto& { return c.model.weights.alpha; }));
    k.push_back(double_key("beta", [](auto& c) -> auto& { return c.model.weights.beta; }));
    k.push_back(double_key("gamma", [](auto& c) -> auto& { return c.model.weights.gamma; }));
    k.push_back(double_key("temperature",
                           [](auto& c) -> auto& { return c.model.weights.temperature; }));
    k.push_back(double_key("baseline.pair",
                           [](auto& c) -> auto& { return c.model.weights.baseline_pair; }));
    k.push_back(double_key("baseline.prim",
                           [](auto& c) -> auto& { return c.model.weights.baseline_prim; }));
    k.push_back(integer_key("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    k.push_back(double_key("train.lr", [](auto& c) -> auto& { return c.train.adam.lr; }));
    k.push_back(integer_key("train.batch", [](auto& c) -> auto& { return c.train.batch; }));
    k.push_back({"eval.world", "open, closed or both",
                 [](ExperimentConfig& c, const std::string& s) {
                   auto w = parse_world_selection(s);
                   if (w) c.world = *w;
                   return w.has_value();
                 },
                 [](const ExperimentConfig& c) { return to_string(c.world); }});
    k.push_back(integer_key("eval.n_points", [](auto& c) -> auto& { return c.train.n_points; }));
    return k;
  }();
  return table;
}

struct Violation {
  std::string key;
  std::string message;
};

std::optional<Violation> find_violation(const ExperimentConfig& c) {
  const auto& m = c.model;
  const auto& w = m.weights;
  if (c.n_states < 2) return Violation{"space.n_states", "must be at least 2"};
  if (c.n_objects < 2) return Violation{"space.n_objects", "must be at least 2"};
  if (!(c.split.unseen_fraction > 0.0 && c.split.unseen_fraction < 1.0))
    return Violation{"space.unseen_fraction", "must lie strictly between 0 and 1"};
  if (c.split.train_per_pair == 0) return Violation{"space.train_per_pair", "must be at least 1"};
  if (c.split.eval_per_pair == 0) return Violation{"space.eval_per_pair", "must be at least 1"};
  if (!(c.noise_sigma >= 0.0)) return Violation{"space.noise_sigma", "must be non-negative"};
  if (m.d_in < 8) return Violation{"space.d_in", "must be at least 8"};
  if (m.d == 0 || m.d % kGridTokens != 0) return Violation{"space.d", "must be a positive multiple of 4"};
  if (m.prefix_length == 0) return Violation{"prompt.prefix_len", "must be at least 1"};
  if (std::none_of(m.active.begin(), m.active.end(), [](bool b) { return b; }))
    return Violation{"elements", "at least one element must be active"};
  if (m.n_heads == 0 || m.d % m.n_heads != 0) return Violation{"fusion.n_heads", "must divide space.d"};
  for (auto [key, value] : {std::pair{"alpha", w.alpha}, std::pair{"beta", w.beta}, std::pair{"gamma", w.gamma},
                            std::pair{"baseline.pair", w.baseline_pair}, std::pair{"baseline.prim", w.baseline_prim}}) {
    if (!(value >= 0.0)) return Violation{key, "must be non-negative"};
  }
  if (!(w.temperature > 0.0)) return Violation{"temperature", "must be positive"};
  if (!(c.train.adam.lr >= 0.0)) return Violation{"train.lr", "must be non-negative"};
  if (c.train.batch == 0) return Violation{"train.batch", "must be at least 1"};
  if (c.train.n_points < 3) return Violation{"eval.n_points", "must be at least 3"};
  return std::nullopt;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (auto v = find_violation(*this)) fail(ErrorKind::Config, v->key + " " + v->message);
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> line_of;
  std::string line;
  std::size_t line_no = 0;
  auto where = [&](std::size_t n) { return source + ":" + std::to_string(n) + ": "; };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, where(line_no) + "expected key = value, got '" + body + "'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) fail(ErrorKind::Config, where(line_no) + "unknown key '" + key + "'");
    if (auto prev = line_of.find(key); prev != line_of.end()) {
      fail(ErrorKind::Config, where(line_no) + "key '" + key + "' already set on line " +
                                  std::to_string(prev->second));
    }
    if (!it->set(cfg, value)) {
      fail(ErrorKind::Config, where(line_no) + "key '" + key + "': cannot parse '" + value + "' as " + it->expected);
    }
    line_of[key] = line_no;
  }
  if (auto v = find_violation(cfg)) {
    auto at = line_of.find(v->key);
    const std::string loc = at == line_of.end() ? source + ": (default): " : where(at->second);
    fail(ErrorKind::Config, loc + "key '" + v->key + "' " + v->message);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::string echo_config(const ExperimentConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : echo_config(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace mfsb
