#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mxfer/binding.hpp"
#include "mxfer/correspondence.hpp"
#include "mxfer/error.hpp"
#include "mxfer/skeleton.hpp"

namespace mxfer {

using Json = nlohmann::json;

// Binding file schema:
//   {"pairs": [{"target": name, "source": name, "alignment": [[3], [3], [3]]?}, ...],
//    "bind_root_velocity": bool}
// A bare array of pairs is accepted as well.

inline Json pair_to_json(const BindingPair& p, const Skeleton& source, const Skeleton& target) {
  Json j = {{"target", target.joint(p.target).name}, {"source", source.joint(p.source).name}};
  if (p.alignment) {
    Json rows = Json::array();
    for (int r = 0; r < 3; ++r) rows.push_back({(*p.alignment)(r, 0), (*p.alignment)(r, 1), (*p.alignment)(r, 2)});
    j["alignment"] = rows;
  }
  return j;
}

inline Json bindings_to_json(const BindingSet& b, const Skeleton& source, const Skeleton& target) {
  Json pairs = Json::array();
  for (const auto& p : b.pairs) pairs.push_back(pair_to_json(p, source, target));
  return {{"pairs", pairs}, {"bind_root_velocity", b.bind_root_velocity}};
}

namespace detail {

inline const Json& field(const Json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::InvalidBinding, std::string("binding entry lacks '") + key + "'");
  }
  return obj.at(key);
}

inline std::string name_field(const Json& obj, const char* key) {
  const Json& v = field(obj, key);
  if (!v.is_string()) throw Error(ErrorCode::InvalidBinding, std::string("'") + key + "' must be a joint name");
  return v.get<std::string>();
}

inline Mat3 matrix_field(const Json& v) {
  if (!v.is_array() || v.size() != 3) throw Error(ErrorCode::InvalidBinding, "alignment must be a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const Json& row = v[static_cast<std::size_t>(r)];
    if (!row.is_array() || row.size() != 3) throw Error(ErrorCode::InvalidBinding, "alignment must be a 3x3 array");
    for (int c = 0; c < 3; ++c) {
      const Json& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) throw Error(ErrorCode::InvalidBinding, "alignment entries must be numbers");
      m(r, c) = x.get<double>();
    }
  }
  return m;
}

}  // namespace detail

// Resolves joint names and validates the result. `root_velocity` applies when
// the document does not say.
inline BindingSet bindings_from_json(const Json& j, const Skeleton& source, const Skeleton& target,
                                     bool root_velocity = true) {
  BindingSet out;
  out.bind_root_velocity = root_velocity;
  const Json* pairs = &j;
  if (j.is_object()) {
    pairs = &detail::field(j, "pairs");
    if (j.contains("bind_root_velocity")) {
      if (!j["bind_root_velocity"].is_boolean()) throw Error(ErrorCode::InvalidBinding, "bind_root_velocity must be a boolean");
      out.bind_root_velocity = j["bind_root_velocity"].get<bool>();
    }
  }
  if (!pairs->is_array()) throw Error(ErrorCode::InvalidBinding, "pairs must be an array");
  for (const auto& e : *pairs) {
    BindingPair p;
    p.target = target.index_of(detail::name_field(e, "target"));
    p.source = source.index_of(detail::name_field(e, "source"));
    if (e.contains("alignment") && !e["alignment"].is_null()) p.alignment = detail::matrix_field(e["alignment"]);
    out.pairs.push_back(p);
  }
  validate_bindings(out, target.joint_count(), source.joint_count());
  return out;
}

inline Json parse_json_text(const std::string& text, ErrorCode code) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(code, e.what());
  }
}

inline BindingSet load_bindings(const std::string& path, const Skeleton& source, const Skeleton& target,
                                bool root_velocity = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidBinding, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return bindings_from_json(parse_json_text(ss.str(), ErrorCode::InvalidBinding), source, target, root_velocity);
}

inline void save_bindings(const std::string& path, const BindingSet& b, const Skeleton& source, const Skeleton& target) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidBinding, "cannot write " + path);
  out << bindings_to_json(b, source, target).dump(2) << '\n';
}

// Ranked proposals as [{"pairs": [...], "score": s}, ...].
inline Json proposals_to_json(const AutoBindResult& r, const Skeleton& source, const Skeleton& target) {
  Json out = Json::array();
  for (const auto& p : r.proposals) {
    Json pairs = Json::array();
    for (const auto& pair : p.pairs) pairs.push_back(pair_to_json(pair, source, target));
    out.push_back({{"pairs", pairs}, {"score", p.score}});
  }
  return out;
}

}  // namespace mxfer
