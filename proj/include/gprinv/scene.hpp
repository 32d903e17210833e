#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace gprinv {

/// Homogeneous, non-magnetic, non-dispersive lossy dielectric layer.
struct Layer {
  std::string name;
  double thickness = 0.0;  ///< m
  double eps_r = 1.0;
  double sigma = 0.0;      ///< S/m
  double mu_r = 1.0;       ///< fixed at 1
};

struct PerfectConductor {};

struct HalfSpace {
  double eps_r = 1.0;
  double sigma = 0.0;
};

using Termination = std::variant<PerfectConductor, HalfSpace>;

/// Flat layers below an antenna that stands `air_gap` above the first layer.
/// An empty layer list describes a reflector (or half-space) directly in air.
struct LayerStack {
  double air_gap = 0.0;
  std::vector<Layer> layers;
  Termination termination = PerfectConductor{};

  bool ends_in_conductor() const { return std::holds_alternative<PerfectConductor>(termination); }
  /// Largest relative permittivity present, including air and the half-space.
  double max_eps_r() const;
};

/// Every invariant violation in the stack; empty means well formed.
std::vector<std::string> validate(const LayerStack& stack);

/// Two-way vertical travel time from the antenna down to the reflector
/// (or to the last interface for a half-space), sum of 2 d sqrt(eps) / c.
double two_way_time(const LayerStack& stack);

enum class FieldKind { AirGap, Thickness, EpsR, Sigma };

/// A resolved reference to one scalar of a LayerStack.
struct FieldPath {
  enum class Target { AirGap, Layer, HalfSpace };
  Target target = Target::AirGap;
  std::size_t layer = 0;
  FieldKind field = FieldKind::AirGap;
};

/// Accepted spellings: `air_gap`, `<layer-name>.<field>`, `layers[i].<field>`,
/// `half_space.<field>` with field one of thickness|eps_r|sigma (the `_m` and
/// `_s_per_m` suffixed JSON names are accepted too).
FieldPath resolve_path(const std::string& path, const LayerStack& stack);
double read_field(const LayerStack& stack, const FieldPath& path);
void write_field(LayerStack& stack, const FieldPath& path, double value);

struct Bounds {
  double low = 0.0;
  double high = 0.0;
};

/// Prior support used when a configuration leaves bounds out.
Bounds default_bounds(FieldKind kind);

struct ParameterEntry {
  std::string name;
  std::string path;
  double low = 0.0;
  double high = 0.0;
  std::string unit;
  /// Report this permittivity as volumetric water content too.
  bool topp = false;
  /// Optional length (thickness or air gap) that gives up whatever this
  /// length gains, keeping their sum and every deeper interface fixed.
  std::string balance;
};

using ParameterVector = std::vector<double>;

/// Ordered, bounded unknowns mapped into a LayerStack template.
class ParameterSpace {
 public:
  ParameterSpace() = default;
  /// Checks bounds, name uniqueness and that every path resolves in `stack`.
  ParameterSpace(std::vector<ParameterEntry> entries, const LayerStack& stack);

  std::size_t dim() const { return entries_.size(); }
  const std::vector<ParameterEntry>& entries() const { return entries_; }
  const ParameterEntry& operator[](std::size_t i) const { return entries_[i]; }
  const FieldPath& field(std::size_t i) const { return paths_[i]; }
  const std::optional<FieldPath>& balance(std::size_t i) const { return balances_[i]; }

  bool contains(const ParameterVector& theta) const;
  /// Index of the first out-of-bounds entry, if any.
  std::optional<std::size_t> first_violation(const ParameterVector& theta) const;
  std::vector<double> lower() const;
  std::vector<double> upper() const;
  std::vector<std::string> names() const;

 private:
  std::vector<ParameterEntry> entries_;
  std::vector<FieldPath> paths_;
  std::vector<std::optional<FieldPath>> balances_;
};

/// Copy of `stack` with each parameter's target overwritten by theta; a
/// balanced length changes by the opposite amount.
LayerStack build_scene(const LayerStack& stack, const ParameterSpace& space, const ParameterVector& theta);

/// Current values of the parameter targets in a stack.
ParameterVector read_parameters(const LayerStack& stack, const ParameterSpace& space);

/// Scene file contents: a template stack plus (possibly empty) parameters.
struct SceneConfig {
  LayerStack stack;
  ParameterSpace space;
};

SceneConfig parse_scene(const nlohmann::json& j);
SceneConfig load_scene(const std::filesystem::path& path);
nlohmann::json to_json(const LayerStack& stack);

}  // namespace gprinv
