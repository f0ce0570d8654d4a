#pragma once

// Policy checkpoint: versioned JSON holding dimensions, flattening order,
// whitening statistics, the flat parameter vector and the value baseline.

#include "pushnpg/policy.hpp"
#include "pushnpg/value.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace pushnpg {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int iteration = 0;
  PolicyParams policy;
  ValueParams value;
  std::uint64_t config_hash = 0;
};

namespace detail {

template <typename Derived>
nlohmann::json to_array(const Eigen::MatrixBase<Derived>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <typename Derived>
void from_array(const nlohmann::json& a, Eigen::MatrixBase<Derived>& v, const char* what) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != v.size())
    throw std::runtime_error(std::string("checkpoint: field '") + what + "' has wrong size");
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = a[static_cast<std::size_t>(i)].get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "pushnpg-policy";
  j["version"] = kCheckpointVersion;
  j["obs_dim"] = kObsDim;
  j["act_dim"] = kActionDim;
  j["theta_dim"] = kThetaDim;
  j["flatten_order"] = kFlattenOrder;
  j["iteration"] = c.iteration;
  j["config_hash"] = c.config_hash;
  j["whitening"] = {{"mean", detail::to_array(c.policy.whitening.mean)},
                    {"std", detail::to_array(c.policy.whitening.std)}};
  j["theta"] = detail::to_array(c.policy.flatten());
  j["value"] = {{"feature_dim", kFeatureDim},
                {"ridge", c.value.ridge},
                {"weights", detail::to_array(c.value.weights)}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pushnpg-policy") throw std::runtime_error("checkpoint: unknown format");
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  if (j.at("obs_dim").get<int>() != kObsDim || j.at("act_dim").get<int>() != kActionDim ||
      j.at("theta_dim").get<int>() != kThetaDim)
    throw std::runtime_error("checkpoint: dimension mismatch");
  if (j.at("flatten_order").get<std::string>() != kFlattenOrder)
    throw std::runtime_error("checkpoint: unknown flattening order");
  Checkpoint c;
  c.iteration = j.at("iteration").get<int>();
  c.config_hash = j.value("config_hash", std::uint64_t{0});
  Whitening w;
  detail::from_array(j.at("whitening").at("mean"), w.mean, "whitening.mean");
  detail::from_array(j.at("whitening").at("std"), w.std, "whitening.std");
  ThetaVec theta;
  detail::from_array(j.at("theta"), theta, "theta");
  c.policy = PolicyParams::unflatten(theta, w);
  c.value.ridge = j.at("value").at("ridge").get<double>();
  detail::from_array(j.at("value").at("weights"), c.value.weights, "value.weights");
  return c;
}

inline std::string checkpoint_text(const Checkpoint& c) { return to_json(c).dump(2) + "\n"; }

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << checkpoint_text(c);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return checkpoint_from_json(nlohmann::json::parse(f));
}

}  // namespace pushnpg
