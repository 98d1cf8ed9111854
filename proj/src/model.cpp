#include "oef/model.hpp"

#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace oef {

using nlohmann::json;

NetworkError::NetworkError(Kind kind, std::string where, const std::string& what)
    : std::runtime_error(where + ": " + what), kind_(kind), where_(std::move(where)) {}

int NetworkSpec::power_node_index(const std::string& id) const {
  for (size_t i = 0; i < power_nodes.size(); ++i)
    if (power_nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

int NetworkSpec::gas_node_index(const std::string& id) const {
  for (size_t i = 0; i < gas_nodes.size(); ++i)
    if (gas_nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw NetworkError(NetworkError::Kind::Schema, where, what);
}

const json& need(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(path + "." + key, "missing field");
  return *it;
}

double need_number(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number()) schema_error(path + "." + key, "expected a number");
  return v.get<double>();
}

std::string need_string(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_string()) schema_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

double opt_number(const json& j, const char* key, const std::string& path, double dflt) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_number()) schema_error(path + "." + key, "expected a number");
  return it->get<double>();
}

bool opt_bool(const json& j, const char* key, const std::string& path, bool dflt) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_boolean()) schema_error(path + "." + key, "expected a boolean");
  return it->get<bool>();
}

std::vector<double> opt_number_list(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return {};
  if (!it->is_array()) schema_error(path + "." + key, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(it->size());
  for (size_t i = 0; i < it->size(); ++i) {
    const json& v = (*it)[i];
    if (!v.is_number())
      schema_error(path + "." + key + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v.get<double>());
  }
  return out;
}

const json* opt_list(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return nullptr;
  if (!it->is_array()) schema_error(path + "." + key, "expected an array");
  return &*it;
}

// Applies `parse` to every element of the optional array `key`.
template <typename T, typename F>
std::vector<T> parse_list(const json& j, const char* key, F parse) {
  std::vector<T> out;
  const json* arr = opt_list(j, key, "$");
  if (!arr) return out;
  out.reserve(arr->size());
  for (size_t i = 0; i < arr->size(); ++i) {
    std::string path = std::string(key) + "[" + std::to_string(i) + "]";
    if (!(*arr)[i].is_object()) schema_error(path, "expected an object");
    out.push_back(parse((*arr)[i], path));
  }
  return out;
}

template <typename T>
void check_unique_ids(const std::vector<T>& items, const char* category) {
  std::unordered_set<std::string> seen;
  for (const T& item : items)
    if (!seen.insert(item.id).second)
      schema_error(std::string(category), "duplicated id \"" + item.id + "\"");
}

}  // namespace

NetworkSpec network_from_json(const json& j) {
  if (!j.is_object()) schema_error("$", "expected a top-level object");
  NetworkSpec spec;

  spec.power_nodes = parse_list<PowerNode>(j, "power_nodes", [](const json& o, const std::string& p) {
    PowerNode n;
    n.id = need_string(o, "id", p);
    n.angle_min = need_number(o, "angle_min", p);
    n.angle_max = need_number(o, "angle_max", p);
    n.loads = opt_number_list(o, "loads", p);
    n.is_reference = opt_bool(o, "is_reference", p, false);
    return n;
  });

  spec.gas_nodes = parse_list<GasNode>(j, "gas_nodes", [](const json& o, const std::string& p) {
    GasNode n;
    n.id = need_string(o, "id", p);
    n.psq_min = need_number(o, "psq_min", p);
    n.psq_max = need_number(o, "psq_max", p);
    n.loads = opt_number_list(o, "loads", p);
    return n;
  });

  spec.units = parse_list<Unit>(j, "units", [](const json& o, const std::string& p) {
    Unit u;
    u.id = need_string(o, "id", p);
    u.at_power_node = need_string(o, "at_power_node", p);
    std::string kind = need_string(o, "kind", p);
    if (kind == "coal-fired") {
      u.kind = UnitKind::CoalFired;
    } else if (kind == "gas-fired") {
      u.kind = UnitKind::GasFired;
    } else {
      schema_error(p + ".kind", "expected \"coal-fired\" or \"gas-fired\", got \"" + kind + "\"");
    }
    u.p_min = need_number(o, "p_min", p);
    u.p_max = need_number(o, "p_max", p);
    u.cost_quad = opt_number(o, "cost_quad", p, 0.0);
    u.cost_lin = opt_number(o, "cost_lin", p, 0.0);
    u.cost_const = opt_number(o, "cost_const", p, 0.0);
    if (o.contains("gas_node")) u.gas_node = need_string(o, "gas_node", p);
    if (o.contains("conversion")) u.conversion = need_number(o, "conversion", p);
    return u;
  });

  spec.wells = parse_list<GasWell>(j, "wells", [](const json& o, const std::string& p) {
    GasWell w;
    w.id = need_string(o, "id", p);
    w.at_gas_node = need_string(o, "at_gas_node", p);
    w.g_min = need_number(o, "g_min", p);
    w.g_max = need_number(o, "g_max", p);
    w.cost = need_number(o, "cost", p);
    return w;
  });

  spec.lines = parse_list<TransmissionLine>(j, "lines", [](const json& o, const std::string& p) {
    TransmissionLine l;
    l.id = need_string(o, "id", p);
    l.from = need_string(o, "from", p);
    l.to = need_string(o, "to", p);
    l.reactance = need_number(o, "reactance", p);
    l.capacity = need_number(o, "capacity", p);
    return l;
  });

  spec.pipelines = parse_list<Pipeline>(j, "pipelines", [](const json& o, const std::string& p) {
    Pipeline pl;
    pl.id = need_string(o, "id", p);
    pl.from = need_string(o, "from", p);
    pl.to = need_string(o, "to", p);
    pl.weymouth = need_number(o, "weymouth", p);
    pl.capacity = need_number(o, "capacity", p);
    return pl;
  });

  spec.compressors = parse_list<Compressor>(j, "compressors", [](const json& o, const std::string& p) {
    Compressor c;
    c.id = need_string(o, "id", p);
    c.from = need_string(o, "from", p);
    c.to = need_string(o, "to", p);
    c.ratio = need_number(o, "ratio", p);
    c.capacity = need_number(o, "capacity", p);
    return c;
  });

  if (auto it = j.find("units_meta"); it != j.end()) {
    if (!it->is_string()) schema_error("$.units_meta", "expected a string");
    spec.units_meta = it->get<std::string>();
  }

  if (spec.power_nodes.empty() && spec.gas_nodes.empty()) schema_error("$", "no nodes");

  check_unique_ids(spec.power_nodes, "power_nodes");
  check_unique_ids(spec.gas_nodes, "gas_nodes");
  check_unique_ids(spec.units, "units");
  check_unique_ids(spec.wells, "wells");
  check_unique_ids(spec.lines, "lines");
  check_unique_ids(spec.pipelines, "pipelines");
  check_unique_ids(spec.compressors, "compressors");

  return spec;
}

json network_to_json(const NetworkSpec& spec) {
  json j = json::object();

  j["power_nodes"] = json::array();
  for (const PowerNode& n : spec.power_nodes) {
    json o{{"id", n.id}, {"angle_min", n.angle_min}, {"angle_max", n.angle_max}};
    o["loads"] = n.loads;
    if (n.is_reference) o["is_reference"] = true;
    j["power_nodes"].push_back(std::move(o));
  }

  j["gas_nodes"] = json::array();
  for (const GasNode& n : spec.gas_nodes) {
    json o{{"id", n.id}, {"psq_min", n.psq_min}, {"psq_max", n.psq_max}};
    o["loads"] = n.loads;
    j["gas_nodes"].push_back(std::move(o));
  }

  j["units"] = json::array();
  for (const Unit& u : spec.units) {
    json o{{"id", u.id},
           {"at_power_node", u.at_power_node},
           {"kind", u.kind == UnitKind::CoalFired ? "coal-fired" : "gas-fired"},
           {"p_min", u.p_min},
           {"p_max", u.p_max},
           {"cost_quad", u.cost_quad},
           {"cost_lin", u.cost_lin},
           {"cost_const", u.cost_const}};
    if (u.gas_node) o["gas_node"] = *u.gas_node;
    if (u.conversion) o["conversion"] = *u.conversion;
    j["units"].push_back(std::move(o));
  }

  j["wells"] = json::array();
  for (const GasWell& w : spec.wells)
    j["wells"].push_back({{"id", w.id},
                          {"at_gas_node", w.at_gas_node},
                          {"g_min", w.g_min},
                          {"g_max", w.g_max},
                          {"cost", w.cost}});

  j["lines"] = json::array();
  for (const TransmissionLine& l : spec.lines)
    j["lines"].push_back({{"id", l.id},
                          {"from", l.from},
                          {"to", l.to},
                          {"reactance", l.reactance},
                          {"capacity", l.capacity}});

  j["pipelines"] = json::array();
  for (const Pipeline& p : spec.pipelines)
    j["pipelines"].push_back({{"id", p.id},
                              {"from", p.from},
                              {"to", p.to},
                              {"weymouth", p.weymouth},
                              {"capacity", p.capacity}});

  j["compressors"] = json::array();
  for (const Compressor& c : spec.compressors)
    j["compressors"].push_back({{"id", c.id},
                                {"from", c.from},
                                {"to", c.to},
                                {"ratio", c.ratio},
                                {"capacity", c.capacity}});

  j["units_meta"] = spec.units_meta;
  return j;
}

NetworkSpec load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError(NetworkError::Kind::Parse, path, "cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw NetworkError(NetworkError::Kind::Parse, path, e.what());
  }
  return network_from_json(j);
}

void save_network(const NetworkSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NetworkError(NetworkError::Kind::Parse, path, "cannot open file for writing");
  out << network_to_json(spec).dump(2) << "\n";
}

namespace {

// Disjoint-set over power nodes, used for the per-component reference check.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

template <typename T>
void report_duplicates(const std::vector<T>& items, const char* category,
                       std::vector<Violation>& out) {
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < items.size(); ++i)
    if (!seen.insert(items[i].id).second)
      out.push_back({std::string(category) + "[" + std::to_string(i) + "].id",
                     "duplicated id \"" + items[i].id + "\""});
}

void check_loads(const std::vector<double>& loads, const std::string& where,
                 std::vector<Violation>& out) {
  for (size_t i = 0; i < loads.size(); ++i)
    if (loads[i] < 0)
      out.push_back({where + ".loads[" + std::to_string(i) + "]", "loads must be >= 0"});
}

}  // namespace

ValidationReport validate(const NetworkSpec& spec) {
  ValidationReport report;
  auto& v = report.violations;

  report_duplicates(spec.power_nodes, "power_nodes", v);
  report_duplicates(spec.gas_nodes, "gas_nodes", v);
  report_duplicates(spec.units, "units", v);
  report_duplicates(spec.wells, "wells", v);
  report_duplicates(spec.lines, "lines", v);
  report_duplicates(spec.pipelines, "pipelines", v);
  report_duplicates(spec.compressors, "compressors", v);

  if (spec.power_nodes.empty() && spec.gas_nodes.empty())
    v.push_back({"$", "network has no nodes"});

  for (size_t i = 0; i < spec.power_nodes.size(); ++i) {
    const PowerNode& n = spec.power_nodes[i];
    std::string where = "power_nodes[" + std::to_string(i) + "]";
    if (!(n.angle_min <= n.angle_max)) v.push_back({where, "angle_min <= angle_max"});
    check_loads(n.loads, where, v);
  }

  for (size_t i = 0; i < spec.gas_nodes.size(); ++i) {
    const GasNode& n = spec.gas_nodes[i];
    std::string where = "gas_nodes[" + std::to_string(i) + "]";
    if (!(0 <= n.psq_min && n.psq_min <= n.psq_max))
      v.push_back({where, "0 <= psq_min <= psq_max"});
    check_loads(n.loads, where, v);
  }

  for (size_t i = 0; i < spec.units.size(); ++i) {
    const Unit& u = spec.units[i];
    std::string where = "units[" + std::to_string(i) + "]";
    if (spec.power_node_index(u.at_power_node) < 0)
      v.push_back({where + ".at_power_node", "unknown power node \"" + u.at_power_node + "\""});
    if (!(0 <= u.p_min && u.p_min <= u.p_max)) v.push_back({where, "0 <= p_min <= p_max"});
    if (u.cost_quad < 0) v.push_back({where + ".cost_quad", "cost_quad >= 0"});
    if (u.kind == UnitKind::GasFired) {
      if (!u.gas_node) {
        v.push_back({where + ".gas_node", "gas-fired unit needs a supplying gas node"});
      } else if (spec.gas_node_index(*u.gas_node) < 0) {
        v.push_back({where + ".gas_node", "unknown gas node \"" + *u.gas_node + "\""});
      }
      if (!u.conversion || *u.conversion <= 0)
        v.push_back({where + ".conversion", "gas-fired unit needs conversion > 0"});
    } else {
      if (u.gas_node) v.push_back({where + ".gas_node", "coal-fired unit must not name a gas node"});
      if (u.conversion) v.push_back({where + ".conversion", "coal-fired unit must not set conversion"});
    }
  }

  for (size_t i = 0; i < spec.wells.size(); ++i) {
    const GasWell& w = spec.wells[i];
    std::string where = "wells[" + std::to_string(i) + "]";
    if (spec.gas_node_index(w.at_gas_node) < 0)
      v.push_back({where + ".at_gas_node", "unknown gas node \"" + w.at_gas_node + "\""});
    if (!(0 <= w.g_min && w.g_min <= w.g_max)) v.push_back({where, "0 <= g_min <= g_max"});
    if (w.cost < 0) v.push_back({where + ".cost", "cost >= 0"});
  }

  for (size_t i = 0; i < spec.lines.size(); ++i) {
    const TransmissionLine& l = spec.lines[i];
    std::string where = "lines[" + std::to_string(i) + "]";
    if (spec.power_node_index(l.from) < 0)
      v.push_back({where + ".from", "unknown power node \"" + l.from + "\""});
    if (spec.power_node_index(l.to) < 0)
      v.push_back({where + ".to", "unknown power node \"" + l.to + "\""});
    if (l.from == l.to) v.push_back({where, "from != to"});
    if (!(l.reactance > 0)) v.push_back({where + ".reactance", "reactance > 0"});
    if (l.capacity < 0) v.push_back({where + ".capacity", "capacity >= 0"});
  }

  for (size_t i = 0; i < spec.pipelines.size(); ++i) {
    const Pipeline& p = spec.pipelines[i];
    std::string where = "pipelines[" + std::to_string(i) + "]";
    if (spec.gas_node_index(p.from) < 0)
      v.push_back({where + ".from", "unknown gas node \"" + p.from + "\""});
    if (spec.gas_node_index(p.to) < 0)
      v.push_back({where + ".to", "unknown gas node \"" + p.to + "\""});
    if (p.from == p.to) v.push_back({where, "from != to"});
    if (!(p.weymouth > 0)) v.push_back({where + ".weymouth", "weymouth > 0"});
    if (p.capacity < 0) v.push_back({where + ".capacity", "capacity >= 0"});
  }

  for (size_t i = 0; i < spec.compressors.size(); ++i) {
    const Compressor& c = spec.compressors[i];
    std::string where = "compressors[" + std::to_string(i) + "]";
    if (spec.gas_node_index(c.from) < 0)
      v.push_back({where + ".from", "unknown gas node \"" + c.from + "\""});
    if (spec.gas_node_index(c.to) < 0)
      v.push_back({where + ".to", "unknown gas node \"" + c.to + "\""});
    if (c.from == c.to) v.push_back({where, "from != to"});
    if (!(c.ratio >= 1)) v.push_back({where + ".ratio", "ratio >= 1"});
    if (c.capacity < 0) v.push_back({where + ".capacity", "capacity >= 0"});
  }

  // Every connected power component needs exactly one reference bus so the
  // angle gauge is pinned and the DC equations have full rank.
  if (!spec.power_nodes.empty()) {
    UnionFind uf(static_cast<int>(spec.power_nodes.size()));
    for (const TransmissionLine& l : spec.lines) {
      int a = spec.power_node_index(l.from);
      int b = spec.power_node_index(l.to);
      if (a >= 0 && b >= 0) uf.unite(a, b);
    }
    std::unordered_map<int, int> ref_count;
    for (size_t i = 0; i < spec.power_nodes.size(); ++i) {
      int root = uf.find(static_cast<int>(i));
      ref_count.try_emplace(root, 0);
      if (spec.power_nodes[i].is_reference) ++ref_count[root];
    }
    for (size_t i = 0; i < spec.power_nodes.size(); ++i) {
      int root = uf.find(static_cast<int>(i));
      if (root != static_cast<int>(i)) continue;  // report once per component
      if (ref_count[root] == 0)
        v.push_back({"power_nodes", "connected component containing \"" +
                                        spec.power_nodes[i].id + "\" has no reference node"});
      else if (ref_count[root] > 1)
        v.push_back({"power_nodes", "connected component containing \"" +
                                        spec.power_nodes[i].id +
                                        "\" has more than one reference node"});
    }
  }

  return report;
}

}  // namespace oef
