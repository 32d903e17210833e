#include "gprinv/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"

namespace gprinv {

using nlohmann::json;

double LayerStack::max_eps_r() const {
  double m = 1.0;
  for (const auto& l : layers) m = std::max(m, l.eps_r);
  if (const auto* hs = std::get_if<HalfSpace>(&termination)) m = std::max(m, hs->eps_r);
  return m;
}

std::vector<std::string> validate(const LayerStack& stack) {
  std::vector<std::string> v;
  if (!std::isfinite(stack.air_gap) || stack.air_gap < 0.0) v.emplace_back("air_gap >= 0");
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const Layer& l = stack.layers[i];
    const std::string id = l.name.empty() ? fmt::format("layer {}", i) : fmt::format("layer {} ({})", i, l.name);
    if (!std::isfinite(l.thickness) || l.thickness <= 0.0) v.push_back(id + ": thickness > 0");
    if (!std::isfinite(l.eps_r) || l.eps_r < 1.0) v.push_back(id + ": eps_r >= 1");
    if (!std::isfinite(l.sigma) || l.sigma < 0.0) v.push_back(id + ": sigma >= 0");
    if (l.mu_r != 1.0) v.push_back(id + ": mu_r = 1");
  }
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination)) {
    if (!std::isfinite(hs->eps_r) || hs->eps_r < 1.0) v.emplace_back("half_space: eps_r >= 1");
    if (!std::isfinite(hs->sigma) || hs->sigma < 0.0) v.emplace_back("half_space: sigma >= 0");
  }
  return v;
}

double two_way_time(const LayerStack& stack) {
  double t = 2.0 * stack.air_gap;
  for (const auto& l : stack.layers) t += 2.0 * l.thickness * std::sqrt(l.eps_r);
  return t / constants::kSpeedOfLight;
}

namespace {

FieldKind parse_field_name(const std::string& s, bool allow_thickness) {
  if (allow_thickness && (s == "thickness" || s == "thickness_m")) return FieldKind::Thickness;
  if (s == "eps_r") return FieldKind::EpsR;
  if (s == "sigma" || s == "sigma_s_per_m") return FieldKind::Sigma;
  throw InputError(fmt::format("unknown field '{}'", s));
}

std::string default_unit(FieldKind k) {
  switch (k) {
    case FieldKind::AirGap:
    case FieldKind::Thickness: return "m";
    case FieldKind::Sigma: return "S/m";
    case FieldKind::EpsR: return "";
  }
  return "";
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(fmt::format("{}: expected an object", where));
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw InputError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
}

double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError(fmt::format("{}: missing '{}'", where, key));
  const json& v = j.at(key);
  if (!v.is_number()) throw InputError(fmt::format("{}: '{}' must be a number", where, key));
  return v.get<double>();
}

}  // namespace

FieldPath resolve_path(const std::string& path, const LayerStack& stack) {
  if (path == "air_gap" || path == "air_gap_m") return {FieldPath::Target::AirGap, 0, FieldKind::AirGap};
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) throw InputError(fmt::format("unresolvable path '{}'", path));
  const std::string head = path.substr(0, dot);
  const std::string tail = path.substr(dot + 1);
  try {
    if (head == "half_space") {
      if (!std::holds_alternative<HalfSpace>(stack.termination)) {
        throw InputError("the scene has no half-space termination");
      }
      return {FieldPath::Target::HalfSpace, 0, parse_field_name(tail, false)};
    }
    std::size_t index = stack.layers.size();
    if (head.rfind("layers[", 0) == 0 && head.back() == ']') {
      const std::string digits = head.substr(7, head.size() - 8);
      if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
        throw InputError("bad layer index");
      }
      index = std::stoul(digits);
    } else {
      for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        if (stack.layers[i].name == head) {
          index = i;
          break;
        }
      }
    }
    if (index >= stack.layers.size()) throw InputError(fmt::format("no layer '{}'", head));
    return {FieldPath::Target::Layer, index, parse_field_name(tail, true)};
  } catch (const InputError& e) {
    throw InputError(fmt::format("unresolvable path '{}': {}", path, e.what()));
  }
}

double read_field(const LayerStack& stack, const FieldPath& p) {
  switch (p.target) {
    case FieldPath::Target::AirGap: return stack.air_gap;
    case FieldPath::Target::HalfSpace: {
      const auto& hs = std::get<HalfSpace>(stack.termination);
      return p.field == FieldKind::EpsR ? hs.eps_r : hs.sigma;
    }
    case FieldPath::Target::Layer: {
      const Layer& l = stack.layers.at(p.layer);
      switch (p.field) {
        case FieldKind::Thickness: return l.thickness;
        case FieldKind::EpsR: return l.eps_r;
        case FieldKind::Sigma: return l.sigma;
        case FieldKind::AirGap: break;
      }
    }
  }
  throw InputError("malformed field path");
}

void write_field(LayerStack& stack, const FieldPath& p, double value) {
  switch (p.target) {
    case FieldPath::Target::AirGap: stack.air_gap = value; return;
    case FieldPath::Target::HalfSpace: {
      auto& hs = std::get<HalfSpace>(stack.termination);
      (p.field == FieldKind::EpsR ? hs.eps_r : hs.sigma) = value;
      return;
    }
    case FieldPath::Target::Layer: {
      Layer& l = stack.layers.at(p.layer);
      switch (p.field) {
        case FieldKind::Thickness: l.thickness = value; return;
        case FieldKind::EpsR: l.eps_r = value; return;
        case FieldKind::Sigma: l.sigma = value; return;
        case FieldKind::AirGap: break;
      }
    }
  }
  throw InputError("malformed field path");
}

Bounds default_bounds(FieldKind kind) {
  switch (kind) {
    case FieldKind::EpsR: return {1.0, 30.0};
    case FieldKind::Sigma: return {0.0, 0.05};
    case FieldKind::Thickness: return {0.01, 0.25};
    case FieldKind::AirGap: return {0.0, 0.5};
  }
  return {};
}

ParameterSpace::ParameterSpace(std::vector<ParameterEntry> entries, const LayerStack& stack)
    : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.name.empty()) throw InputError("parameter with empty name");
    if (!seen.insert(e.name).second) throw InputError(fmt::format("duplicate parameter name '{}'", e.name));
    if (!std::isfinite(e.low) || !std::isfinite(e.high) || !(e.low < e.high)) {
      throw InputError(fmt::format("parameter '{}': bounds must be finite with low < high", e.name));
    }
    const FieldPath p = resolve_path(e.path, stack);
    const bool physical = (p.field == FieldKind::EpsR && e.low >= 1.0) ||
                          (p.field == FieldKind::Sigma && e.low >= 0.0) ||
                          (p.field == FieldKind::Thickness && e.low > 0.0) ||
                          (p.field == FieldKind::AirGap && e.low >= 0.0);
    if (!physical) throw InputError(fmt::format("parameter '{}': lower bound outside the physical range", e.name));
    paths_.push_back(p);
    balances_.emplace_back();
    if (e.balance.empty()) continue;
    const bool length = p.field == FieldKind::Thickness || p.field == FieldKind::AirGap;
    const FieldPath b = resolve_path(e.balance, stack);
    const bool balance_length = b.field == FieldKind::Thickness || b.field == FieldKind::AirGap;
    if (!length || !balance_length) {
      throw InputError(fmt::format("parameter '{}': balance links two lengths (thickness or air gap)", e.name));
    }
    if (b.target == p.target && b.layer == p.layer) {
      throw InputError(fmt::format("parameter '{}': a length cannot balance itself", e.name));
    }
    // The balanced length must stay physical across the whole prior range.
    const double left = read_field(stack, b) - (e.high - read_field(stack, p));
    if (b.field == FieldKind::Thickness ? !(left > 0.0) : !(left >= 0.0)) {
      throw InputError(fmt::format("parameter '{}': at its upper bound '{}' would shrink to {:.4g} m", e.name,
                                   e.balance, left));
    }
    balances_.back() = b;
  }
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    for (std::size_t k = 0; k < paths_.size(); ++k) {
      const auto& b = balances_[k];
      if (b && b->target == paths_[i].target && b->layer == paths_[i].layer && b->field == paths_[i].field) {
        throw InputError(fmt::format("parameter '{}' is also the balance of '{}'", entries_[i].name,
                                     entries_[k].name));
      }
    }
  }
}

std::optional<std::size_t> ParameterSpace::first_violation(const ParameterVector& theta) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!(theta[i] >= entries_[i].low && theta[i] <= entries_[i].high)) return i;
  }
  return std::nullopt;
}

bool ParameterSpace::contains(const ParameterVector& theta) const {
  return theta.size() == dim() && !first_violation(theta);
}

std::vector<double> ParameterSpace::lower() const {
  std::vector<double> v;
  for (const auto& e : entries_) v.push_back(e.low);
  return v;
}

std::vector<double> ParameterSpace::upper() const {
  std::vector<double> v;
  for (const auto& e : entries_) v.push_back(e.high);
  return v;
}

std::vector<std::string> ParameterSpace::names() const {
  std::vector<std::string> v;
  for (const auto& e : entries_) v.push_back(e.name);
  return v;
}

LayerStack build_scene(const LayerStack& stack, const ParameterSpace& space, const ParameterVector& theta) {
  if (theta.size() != space.dim()) {
    throw InputError(fmt::format("parameter vector has {} values, space has {}", theta.size(), space.dim()));
  }
  if (const auto bad = space.first_violation(theta)) {
    const auto& e = space[*bad];
    throw InputError(fmt::format("parameter '{}' = {} outside [{}, {}]", e.name, theta[*bad], e.low, e.high));
  }
  LayerStack out = stack;
  for (std::size_t i = 0; i < space.dim(); ++i) {
    // Re-resolve so a space built against a different template still fails loudly.
    const FieldPath p = resolve_path(space[i].path, out);
    const double gain = theta[i] - read_field(out, p);
    write_field(out, p, theta[i]);
    if (!space[i].balance.empty()) {
      const FieldPath b = resolve_path(space[i].balance, out);
      write_field(out, b, read_field(out, b) - gain);
    }
  }
  return out;
}

ParameterVector read_parameters(const LayerStack& stack, const ParameterSpace& space) {
  ParameterVector v;
  for (std::size_t i = 0; i < space.dim(); ++i) v.push_back(read_field(stack, resolve_path(space[i].path, stack)));
  return v;
}

SceneConfig parse_scene(const json& j) {
  check_keys(j, {"air_gap_m", "layers", "termination", "parameters"}, "scene");
  SceneConfig cfg;
  cfg.stack.air_gap = number(j, "air_gap_m", "scene");
  if (!j.contains("layers") || !j.at("layers").is_array()) throw InputError("scene: 'layers' must be an array");
  std::size_t i = 0;
  for (const auto& jl : j.at("layers")) {
    const std::string where = fmt::format("scene.layers[{}]", i++);
    check_keys(jl, {"name", "thickness_m", "eps_r", "sigma_s_per_m"}, where);
    Layer l;
    if (jl.contains("name")) {
      if (!jl.at("name").is_string()) throw InputError(where + ": 'name' must be a string");
      l.name = jl.at("name").get<std::string>();
    }
    l.thickness = number(jl, "thickness_m", where);
    l.eps_r = number(jl, "eps_r", where);
    l.sigma = jl.contains("sigma_s_per_m") ? number(jl, "sigma_s_per_m", where) : 0.0;
    cfg.stack.layers.push_back(l);
  }
  if (j.contains("termination")) {
    const json& t = j.at("termination");
    if (t.is_string()) {
      if (t.get<std::string>() != "pec") throw InputError("scene.termination: expected \"pec\" or {\"half_space\": ...}");
    } else {
      check_keys(t, {"half_space"}, "scene.termination");
      if (!t.contains("half_space")) throw InputError("scene.termination: missing 'half_space'");
      const json& hs = t.at("half_space");
      check_keys(hs, {"eps_r", "sigma_s_per_m"}, "scene.termination.half_space");
      HalfSpace h;
      h.eps_r = number(hs, "eps_r", "scene.termination.half_space");
      h.sigma = hs.contains("sigma_s_per_m") ? number(hs, "sigma_s_per_m", "scene.termination.half_space") : 0.0;
      cfg.stack.termination = h;
    }
  }
  if (const auto problems = validate(cfg.stack); !problems.empty()) {
    throw InputError(fmt::format("scene: {}", fmt::join(problems, "; ")));
  }

  std::vector<ParameterEntry> entries;
  if (j.contains("parameters")) {
    if (!j.at("parameters").is_array()) throw InputError("scene: 'parameters' must be an array");
    std::size_t k = 0;
    for (const auto& jp : j.at("parameters")) {
      const std::string where = fmt::format("scene.parameters[{}]", k++);
      check_keys(jp, {"name", "path", "low", "high", "unit", "topp", "balance"}, where);
      if (!jp.contains("name") || !jp.at("name").is_string()) throw InputError(where + ": 'name' must be a string");
      if (!jp.contains("path") || !jp.at("path").is_string()) throw InputError(where + ": 'path' must be a string");
      ParameterEntry e;
      e.name = jp.at("name").get<std::string>();
      e.path = jp.at("path").get<std::string>();
      const FieldPath p = resolve_path(e.path, cfg.stack);
      const Bounds def = default_bounds(p.field);
      e.low = jp.contains("low") ? number(jp, "low", where) : def.low;
      e.high = jp.contains("high") ? number(jp, "high", where) : def.high;
      e.unit = jp.contains("unit") ? jp.at("unit").get<std::string>() : default_unit(p.field);
      const bool soil_eps = p.field == FieldKind::EpsR && p.target == FieldPath::Target::Layer &&
                            cfg.stack.layers[p.layer].name.rfind("soil", 0) == 0;
      if (jp.contains("topp")) {
        if (!jp.at("topp").is_boolean()) throw InputError(where + ": 'topp' must be a boolean");
        e.topp = jp.at("topp").get<bool>();
        if (e.topp && p.field != FieldKind::EpsR) throw InputError(where + ": 'topp' applies to eps_r only");
      } else {
        e.topp = soil_eps;
      }
      if (jp.contains("balance")) {
        if (!jp.at("balance").is_string()) throw InputError(where + ": 'balance' must be a path string");
        e.balance = jp.at("balance").get<std::string>();
      }
      entries.push_back(e);
    }
  }
  cfg.space = ParameterSpace(std::move(entries), cfg.stack);
  return cfg;
}

SceneConfig load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open scene file '{}'", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(fmt::format("'{}': {}", path.string(), e.what()));
  }
  try {
    return parse_scene(j);
  } catch (const json::exception& e) {
    throw InputError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

json to_json(const LayerStack& stack) {
  json j;
  j["air_gap_m"] = stack.air_gap;
  j["layers"] = json::array();
  for (const auto& l : stack.layers) {
    json jl{{"thickness_m", l.thickness}, {"eps_r", l.eps_r}, {"sigma_s_per_m", l.sigma}};
    if (!l.name.empty()) jl["name"] = l.name;
    j["layers"].push_back(jl);
  }
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination)) {
    j["termination"] = {{"half_space", {{"eps_r", hs->eps_r}, {"sigma_s_per_m", hs->sigma}}}};
  } else {
    j["termination"] = "pec";
  }
  return j;
}

}  // namespace gprinv
