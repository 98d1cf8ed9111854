#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

// Data model for an integrated electricity-gas system (IEGS).
//
// Conventions:
//  - Gas pressure never appears directly; every pressure quantity is the
//    *squared* pressure (pi), so pipeline physics stays polynomial.
//  - A Pipeline stores the squared Weymouth constant: `weymouth` multiplies a
//    squared-pressure difference to give a squared flow.
//  - All quantities are unitless consistent reals; `units_meta` is free-text
//    documentation with no computational effect.

namespace oef {

struct PowerNode {
  std::string id;
  double angle_min = 0.0;  // bus phase-angle bounds, radians
  double angle_max = 0.0;
  std::vector<double> loads;  // electric demands at this bus, summed later
  bool is_reference = false;  // DC slack bus; angle pinned to 0
};

struct GasNode {
  std::string id;
  double psq_min = 0.0;  // bounds on squared pressure
  double psq_max = 0.0;
  std::vector<double> loads;  // gas demands at this node
};

enum class UnitKind { CoalFired, GasFired };

struct Unit {
  std::string id;
  std::string at_power_node;
  UnitKind kind = UnitKind::CoalFired;
  double p_min = 0.0;
  double p_max = 0.0;
  // Production cost c2*p^2 + c1*p + c0; gas-fired units have no direct cost
  // (their fuel is bought through the gas network instead).
  double cost_quad = 0.0;
  double cost_lin = 0.0;
  double cost_const = 0.0;
  std::optional<std::string> gas_node;   // supplying node, gas-fired only
  std::optional<double> conversion;      // gas consumed per MW, gas-fired only
};

struct GasWell {
  std::string id;
  std::string at_gas_node;
  double g_min = 0.0;
  double g_max = 0.0;
  double cost = 0.0;  // linear production cost
};

struct TransmissionLine {
  std::string id;
  std::string from, to;  // power-node ids; positive flow from -> to
  double reactance = 0.0;
  double capacity = 0.0;  // |flow| bound
};

struct Pipeline {
  std::string id;
  std::string from, to;   // gas-node ids; positive flow from -> to
  double weymouth = 0.0;  // SQUARED Weymouth constant (flow^2 per psq drop)
  double capacity = 0.0;  // |flow| bound
};

struct Compressor {
  std::string id;
  std::string from, to;  // gas-node ids; boosts pressure from -> to
  double ratio = 1.0;    // max downstream/upstream squared-pressure ratio
  double capacity = 0.0; // flow bounds [0, capacity]
};

struct NetworkSpec {
  std::vector<PowerNode> power_nodes;
  std::vector<GasNode> gas_nodes;
  std::vector<Unit> units;
  std::vector<GasWell> wells;
  std::vector<TransmissionLine> lines;
  std::vector<Pipeline> pipelines;
  std::vector<Compressor> compressors;
  std::string units_meta;  // free-text description of the unit system

  // Index lookups; return -1 when the id is unknown.
  int power_node_index(const std::string& id) const;
  int gas_node_index(const std::string& id) const;
};

// Thrown by load_network / network_from_json.
class NetworkError : public std::runtime_error {
 public:
  enum class Kind { Parse, Schema };
  NetworkError(Kind kind, std::string where, const std::string& what);
  Kind kind() const { return kind_; }
  const std::string& where() const { return where_; }  // offending JSON path

 private:
  Kind kind_;
  std::string where_;
};

struct Violation {
  std::string where;    // e.g. "compressors[0].ratio"
  std::string message;  // violated invariant, human-readable
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

NetworkSpec network_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const NetworkSpec& spec);

NetworkSpec load_network(const std::string& path);
void save_network(const NetworkSpec& spec, const std::string& path);

// Checks every structural invariant (bounds ordered, ids unique and
// resolvable, one reference bus per connected power component, ...).
// Violations are data, not errors; an empty report means a valid spec.
ValidationReport validate(const NetworkSpec& spec);

}  // namespace oef
