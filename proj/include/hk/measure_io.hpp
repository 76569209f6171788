#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hk/measures.hpp"

namespace hk {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw invalid_input(where + ": expected a number");
  return j.get<double>();
}

inline GroundSpace parse_space(const nlohmann::json& js, const std::string& file) {
  if (!js.is_object()) throw invalid_input(file + ": \"space\" must be an object");
  if (!js.contains("type") || !js["type"].is_string())
    throw invalid_input(file + ": space.type missing or not a string");
  std::string type = js["type"].get<std::string>();
  if (type == "euclidean" || type == "sphere") {
    if (!js.contains("dim") || !js["dim"].is_number_integer())
      throw invalid_input(file + ": space.dim missing or not an integer");
    int dim = js["dim"].get<int>();
    if (dim < 1) throw invalid_input(file + ": space.dim must be positive");
    return type == "euclidean" ? GroundSpace::euclidean(dim) : GroundSpace::sphere(dim);
  }
  if (type == "finite") {
    if (!js.contains("matrix") || !js["matrix"].is_array())
      throw invalid_input(file + ": space.matrix missing or not an array");
    std::vector<std::vector<double>> m;
    for (const auto& row : js["matrix"]) {
      if (!row.is_array()) throw invalid_input(file + ": space.matrix rows must be arrays");
      std::vector<double> r;
      for (const auto& v : row) r.push_back(require_number(v, file + ": space.matrix entry"));
      m.push_back(std::move(r));
    }
    return GroundSpace::finite(std::move(m));
  }
  throw invalid_input(file + ": unknown space.type \"" + type + "\"");
}

}  // namespace detail

inline DiscreteMeasure parse_measure(const nlohmann::json& j, const std::string& file) {
  if (!j.is_object()) throw invalid_input(file + ": top level must be an object");
  if (!j.contains("space")) throw invalid_input(file + ": missing \"space\"");
  SpacePtr space = make_space(detail::parse_space(j["space"], file));
  std::vector<Atom> atoms;
  if (j.contains("atoms")) {
    if (!j["atoms"].is_array()) throw invalid_input(file + ": \"atoms\" must be an array");
    std::size_t i = 0;
    for (const auto& ja : j["atoms"]) {
      std::ostringstream where;
      where << file << ": atoms[" << i << "]";
      if (!ja.is_object()) throw invalid_input(where.str() + " must be an object");
      if (!ja.contains("mass")) throw invalid_input(where.str() + ".mass missing");
      double mass = detail::require_number(ja["mass"], where.str() + ".mass");
      if (mass < 0.0) throw invalid_input(where.str() + ".mass is negative");
      Point p;
      if (space->kind() == SpaceKind::finite) {
        if (!ja.contains("index") || !ja["index"].is_number_integer())
          throw invalid_input(where.str() + ".index missing or not an integer (finite space)");
        long long k = ja["index"].get<long long>();
        if (k < 0 || static_cast<std::size_t>(k) >= space->finite_size())
          throw invalid_input(where.str() + ".index out of range");
        p = Point::index(static_cast<std::size_t>(k));
      } else {
        if (!ja.contains("point") || !ja["point"].is_array())
          throw invalid_input(where.str() + ".point missing or not an array");
        std::vector<double> coords;
        for (const auto& c : ja["point"]) coords.push_back(detail::require_number(c, where.str() + ".point"));
        p = Point::at(std::move(coords));
      }
      atoms.push_back(Atom{std::move(p), mass});
      ++i;
    }
  }
  return DiscreteMeasure(std::move(space), std::move(atoms));
}

inline DiscreteMeasure read_measure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input(path + ": cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw invalid_input(path + ": " + e.what());
  }
  return parse_measure(j, path);
}

inline void write_space(std::ostream& os, const GroundSpace& space) {
  os << "{\"type\": ";
  switch (space.kind()) {
    case SpaceKind::euclidean:
      os << "\"euclidean\", \"dim\": " << space.dim();
      break;
    case SpaceKind::sphere:
      os << "\"sphere\", \"dim\": " << space.dim();
      break;
    case SpaceKind::finite: {
      os << "\"finite\", \"matrix\": [";
      for (std::size_t i = 0; i < space.finite_size(); ++i) {
        if (i) os << ", ";
        os << "[";
        for (std::size_t j = 0; j < space.finite_size(); ++j) {
          if (j) os << ", ";
          os << format_double(space.finite_distance(i, j));
        }
        os << "]";
      }
      os << "]";
      break;
    }
  }
  os << "}";
}

inline std::string measure_to_json(const DiscreteMeasure& mu) {
  std::ostringstream os;
  os << "{\"space\": ";
  write_space(os, mu.space());
  os << ", \"atoms\": [";
  bool first = true;
  for (const auto& a : mu.atoms()) {
    if (!first) os << ", ";
    first = false;
    os << "{";
    if (mu.space().kind() == SpaceKind::finite) {
      os << "\"index\": " << a.point.idx();
    } else {
      os << "\"point\": [";
      for (std::size_t i = 0; i < a.point.dim(); ++i) {
        if (i) os << ", ";
        os << format_double(a.point[i]);
      }
      os << "]";
    }
    os << ", \"mass\": " << format_double(a.mass) << "}";
  }
  os << "]}\n";
  return os.str();
}

inline void write_measure(const std::string& path, const DiscreteMeasure& mu) {
  std::ofstream out(path);
  if (!out) throw invalid_input(path + ": cannot open file for writing");
  out << measure_to_json(mu);
}

}  // namespace hk
