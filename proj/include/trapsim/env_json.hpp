#pragma once

// JSON persistence for sampled environments. A record stores everything
// needed to rebuild the exact same WField: sampler inputs, the sampled
// atoms in their original order, and the discretization floor.

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "environment.hpp"

namespace trapsim {

struct EnvironmentRecord {
  int d = 1;
  int N = 2;
  double alpha = 0.5;
  double w_min = 1e-4;
  std::uint64_t seed = 0;
  TrapMeasure measure;
  double w_floor = -1.0;  // negative selects the discretize default

  WField realize() const { return discretize(measure, TorusSpec{d, N}, w_floor); }
};

inline nlohmann::json to_json(const EnvironmentRecord& r) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : r.measure.atoms) {
    nlohmann::json pos = nlohmann::json::array();
    for (int i = 0; i < r.d; ++i) pos.push_back(a.pos[i]);
    atoms.push_back(nlohmann::json::array({pos, a.w}));
  }
  return nlohmann::json{{"d", r.d},
                        {"N", r.N},
                        {"alpha", r.alpha},
                        {"w_min", r.w_min},
                        {"seed", r.seed},
                        {"atoms", atoms},
                        {"background", r.measure.background},
                        {"w_floor", r.w_floor}};
}

inline EnvironmentRecord record_from_json(const nlohmann::json& j) {
  EnvironmentRecord r;
  try {
    r.d = j.at("d").get<int>();
    r.N = j.at("N").get<int>();
    if (r.d < 1 || r.d > 3) throw std::runtime_error("dimension out of range");
    if (r.N < 2) throw std::runtime_error("N out of range");
    r.alpha = j.at("alpha").get<double>();
    r.w_min = j.at("w_min").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.measure.d = r.d;
    r.measure.background = j.at("background").get<double>();
    r.w_floor = j.at("w_floor").get<double>();
    for (const auto& ja : j.at("atoms")) {
      if (!ja.is_array() || ja.size() != 2)
        throw std::runtime_error("atom entry must be [position, weight]");
      TrapAtom a;
      const auto& pos = ja.at(0);
      if (static_cast<int>(pos.size()) != r.d)
        throw std::runtime_error("atom position arity mismatch");
      for (int i = 0; i < r.d; ++i) a.pos[i] = pos.at(static_cast<std::size_t>(i)).get<double>();
      a.w = ja.at(1).get<double>();
      r.measure.atoms.push_back(a);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("environment record: ") + e.what());
  }
  return r;
}

inline void save_environment(const std::string& path, const EnvironmentRecord& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << to_json(r).dump(2) << "\n";
}

inline EnvironmentRecord load_environment(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("environment record: ") + e.what());
  }
  return record_from_json(j);
}

// convenience: sample + discretize + wrap in one call
inline EnvironmentRecord make_environment(int d, int N, const PppConfig& cfg,
                                          double background = 0.0, double w_floor = -1.0) {
  EnvironmentRecord r;
  r.d = d;
  r.N = N;
  r.alpha = cfg.alpha;
  r.w_min = cfg.w_min;
  r.seed = cfg.seed;
  r.measure = sample_ppp_environment(cfg, d, background);
  r.w_floor = w_floor;
  return r;
}

}  // namespace trapsim
