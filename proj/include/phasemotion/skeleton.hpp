// Copyright 2026 The phasemotion Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "phasemotion/error.hpp"
#include "phasemotion/tensor.hpp"

namespace phasemotion {

enum class LimbTag { left_arm, right_arm, left_leg, right_leg, torso, head };

inline constexpr std::array<std::pair<LimbTag, std::string_view>, 6> kLimbTagNames{{
    {LimbTag::left_arm, "left_arm"},
    {LimbTag::right_arm, "right_arm"},
    {LimbTag::left_leg, "left_leg"},
    {LimbTag::right_leg, "right_leg"},
    {LimbTag::torso, "torso"},
    {LimbTag::head, "head"},
}};

inline std::string_view to_string(LimbTag tag) {
  for (const auto& [t, name] : kLimbTagNames)
    if (t == tag) return name;
  return "?";
}

inline std::optional<LimbTag> parse_limb_tag(std::string_view s) {
  for (const auto& [t, name] : kLimbTagNames)
    if (name == s) return t;
  return std::nullopt;
}

inline bool is_limb(LimbTag t) {
  return t == LimbTag::left_arm || t == LimbTag::right_arm || t == LimbTag::left_leg ||
         t == LimbTag::right_leg;
}

inline LimbTag mirror_of(LimbTag t) {
  switch (t) {
    case LimbTag::left_arm: return LimbTag::right_arm;
    case LimbTag::right_arm: return LimbTag::left_arm;
    case LimbTag::left_leg: return LimbTag::right_leg;
    case LimbTag::right_leg: return LimbTag::left_leg;
    default: return t;
  }
}

// Arm paired with the leg on the opposite side.
inline LimbTag contralateral_of(LimbTag t) {
  switch (t) {
    case LimbTag::left_arm: return LimbTag::right_leg;
    case LimbTag::right_arm: return LimbTag::left_leg;
    case LimbTag::left_leg: return LimbTag::right_arm;
    case LimbTag::right_leg: return LimbTag::left_arm;
    default: return t;
  }
}

/// Raw joint description as read from a file. `parent` < 0 or equal to the
/// joint's own index marks a root.
struct JointSpec {
  std::string name;
  long parent = -1;
  std::optional<LimbTag> tag;
  // Rest offset from the parent (absolute position for the root), millimetres.
  std::array<double, 3> offset{0.0, 0.0, 0.0};
};

struct ValidationReport {
  std::vector<std::string> findings;
  bool ok() const noexcept { return findings.empty(); }
  std::string summary() const {
    std::string s;
    for (const auto& f : findings) {
      if (!s.empty()) s += "; ";
      s += f;
    }
    return s;
  }
};

namespace detail {

inline bool is_root(const JointSpec& j, std::size_t index) {
  return j.parent < 0 || static_cast<std::size_t>(j.parent) == index;
}

}  // namespace detail

/// Structural checks: parent range, roots, cycles, tag coverage, names, and
/// that every limb tag forms a single unbranched chain.
inline ValidationReport validate(std::span<const JointSpec> joints) {
  ValidationReport report;
  const std::size_t n = joints.size();
  if (n == 0) {
    report.findings.push_back("skeleton has no joints");
    return report;
  }
  bool parents_ok = true;
  std::vector<std::string> roots;
  std::set<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& j = joints[i];
    if (!names.insert(j.name).second) {
      report.findings.push_back("duplicate joint name '" + j.name + "'");
    }
    if (j.parent >= static_cast<long>(n)) {
      report.findings.push_back("joint '" + j.name + "' has parent index " +
                                std::to_string(j.parent) + " out of range");
      parents_ok = false;
    }
    if (detail::is_root(j, i)) roots.push_back(j.name);
    if (!j.tag) report.findings.push_back("joint '" + j.name + "' has no limb tag");
  }
  if (roots.empty()) {
    report.findings.push_back("no root joint");
  } else if (roots.size() > 1) {
    std::string list;
    for (const auto& r : roots) list += (list.empty() ? "" : ", ") + r;
    report.findings.push_back("multiple roots: " + list);
  }
  if (!parents_ok) return report;

  // Parent links form a functional graph; colour it to find cycles.
  std::vector<int> state(n, 0);  // 0 unvisited, 1 on current path, 2 done
  for (std::size_t start = 0; start < n; ++start) {
    if (state[start]) continue;
    std::vector<std::size_t> path;
    std::size_t cur = start;
    while (true) {
      if (state[cur] == 2) break;
      if (state[cur] == 1) {
        auto it = std::find(path.begin(), path.end(), cur);
        std::vector<std::size_t> cycle(it, path.end());
        auto lowest = std::min_element(cycle.begin(), cycle.end());
        std::rotate(cycle.begin(), lowest, cycle.end());
        std::string members;
        for (std::size_t c : cycle) {
          members += (members.empty() ? "" : " -> ") + joints[c].name;
        }
        report.findings.push_back("cycle: " + members);
        break;
      }
      state[cur] = 1;
      path.push_back(cur);
      if (detail::is_root(joints[cur], cur)) break;
      cur = static_cast<std::size_t>(joints[cur].parent);
    }
    for (std::size_t p : path) state[p] = 2;
  }

  for (const auto& [tag, tag_name] : kLimbTagNames) {
    if (!is_limb(tag)) continue;
    std::size_t starts = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (joints[i].tag != tag) continue;
      const bool parent_same = !detail::is_root(joints[i], i) &&
                               joints[static_cast<std::size_t>(joints[i].parent)].tag == tag;
      if (!parent_same) ++starts;
      std::size_t same_children = 0;
      for (std::size_t c = 0; c < n; ++c) {
        if (c != i && joints[c].parent == static_cast<long>(i) && joints[c].tag == tag) {
          ++same_children;
        }
      }
      if (same_children > 1) {
        report.findings.push_back("limb chain " + std::string(tag_name) +
                                  " branches at joint '" + joints[i].name + "'");
      }
    }
    if (starts > 1) {
      report.findings.push_back("limb chain " + std::string(tag_name) +
                                " is split into " + std::to_string(starts) + " pieces");
    }
  }
  return report;
}

/// Validated kinematic tree with limb tags.
class Skeleton {
 public:
  explicit Skeleton(std::vector<JointSpec> joints, std::string name = "skeleton")
      : name_(std::move(name)), joints_(std::move(joints)) {
    const auto report = validate(std::span<const JointSpec>(joints_));
    if (!report.ok()) throw ValidationError("invalid skeleton: " + report.summary());
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      if (detail::is_root(joints_[i], i)) {
        root_ = i;
        joints_[i].parent = -1;
      }
    }
    children_.assign(joints_.size(), {});
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      if (joints_[i].parent >= 0) {
        children_[static_cast<std::size_t>(joints_[i].parent)].push_back(i);
      }
    }
    depth_.assign(joints_.size(), 0);
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      std::size_t d = 0;
      std::size_t cur = i;
      const LimbTag tag = *joints_[i].tag;
      while (joints_[cur].parent >= 0 &&
             joints_[static_cast<std::size_t>(joints_[cur].parent)].tag == tag) {
        cur = static_cast<std::size_t>(joints_[cur].parent);
        ++d;
      }
      depth_[i] = d;
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t joint_count() const noexcept { return joints_.size(); }
  const std::vector<JointSpec>& joints() const noexcept { return joints_; }
  const std::string& joint_name(std::size_t j) const { return joints_.at(j).name; }
  LimbTag tag(std::size_t j) const { return *joints_.at(j).tag; }
  std::optional<std::size_t> parent(std::size_t j) const {
    const long p = joints_.at(j).parent;
    if (p < 0) return std::nullopt;
    return static_cast<std::size_t>(p);
  }
  const std::vector<std::size_t>& children(std::size_t j) const { return children_.at(j); }
  std::size_t root() const noexcept { return root_; }

  /// Position along the joint's limb chain; 0 for the chain's first joint.
  std::size_t chain_depth(std::size_t j) const { return depth_.at(j); }

  /// Joints carrying `tag`, ordered by chain depth.
  std::vector<std::size_t> chain(LimbTag tag) const {
    std::vector<std::size_t> c;
    for (std::size_t i = 0; i < joints_.size(); ++i)
      if (*joints_[i].tag == tag) c.push_back(i);
    std::sort(c.begin(), c.end(),
              [&](std::size_t a, std::size_t b) { return depth_[a] < depth_[b]; });
    return c;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i)
      if (joints_[i].name == name) return i;
    return std::nullopt;
  }

  /// Rest pose [J × 3] obtained by accumulating offsets from the root.
  Tensor rest_pose() const {
    Tensor pose(Shape{joints_.size(), 3});
    std::vector<std::size_t> order{root_};
    for (std::size_t q = 0; q < order.size(); ++q) {
      const std::size_t j = order[q];
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = joints_[j].parent >= 0
                                ? pose(static_cast<std::size_t>(joints_[j].parent), c)
                                : 0.0;
        pose(j, c) = base + joints_[j].offset[c];
      }
      for (std::size_t ch : children_[j]) order.push_back(ch);
    }
    return pose;
  }

 private:
  std::string name_;
  std::vector<JointSpec> joints_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> depth_;
  std::size_t root_ = 0;
};

inline ValidationReport validate(const Skeleton& s) {
  return validate(std::span<const JointSpec>(s.joints()));
}

// ---------------------------------------------------------------------------
// Explicit relation sets

/// Which relation kinds enter C(j). All off gives singletons.
struct RelationRules {
  bool kinematic = true;
  bool symmetry = true;
  bool contralateral = true;
  std::size_t hops = 1;

  static RelationRules singletons() { return {false, false, false, 1}; }
};

class RelationSet {
 public:
  RelationSet() = default;
  explicit RelationSet(std::vector<std::vector<std::size_t>> sets)
      : sets_(std::move(sets)) {}

  std::size_t joint_count() const noexcept { return sets_.size(); }
  const std::vector<std::size_t>& of(std::size_t j) const { return sets_.at(j); }
  std::size_t cardinality(std::size_t j) const { return sets_.at(j).size(); }
  bool contains(std::size_t j, std::size_t other) const {
    const auto& s = sets_.at(j);
    return std::find(s.begin(), s.end(), other) != s.end();
  }

  friend bool operator==(const RelationSet&, const RelationSet&) = default;

 private:
  std::vector<std::vector<std::size_t>> sets_;
};

namespace detail {

inline std::optional<std::size_t> joint_at_depth(const Skeleton& s, LimbTag tag,
                                                 std::size_t depth) {
  const auto c = s.chain(tag);
  if (depth < c.size()) return c[depth];
  return std::nullopt;
}

}  // namespace detail

/// C(j) = self, kinematic neighbours within `hops` (by index), the mirror joint
/// at equal chain depth, then the contralateral arm/leg joint at equal depth.
inline RelationSet build_relations(const Skeleton& s, const RelationRules& rules = {}) {
  if (rules.symmetry) {
    for (auto [a, b] : {std::pair{LimbTag::left_arm, LimbTag::right_arm},
                        std::pair{LimbTag::left_leg, LimbTag::right_leg}}) {
      const std::size_t la = s.chain(a).size(), lb = s.chain(b).size();
      if (la != lb) {
        throw ValidationError("asymmetric limb chains: " + std::string(to_string(a)) +
                              " has " + std::to_string(la) + " joints, " +
                              std::string(to_string(b)) + " has " + std::to_string(lb));
      }
    }
  }
  const std::size_t n = s.joint_count();
  std::vector<std::vector<std::size_t>> sets(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto& c = sets[j];
    auto push = [&c](std::size_t k) {
      if (std::find(c.begin(), c.end(), k) == c.end()) c.push_back(k);
    };
    push(j);
    if (rules.kinematic && rules.hops > 0) {
      std::vector<std::size_t> dist(n, n + 1);
      std::queue<std::size_t> q;
      dist[j] = 0;
      q.push(j);
      std::vector<std::size_t> found;
      while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        if (dist[u] == rules.hops) continue;
        std::vector<std::size_t> nb = s.children(u);
        if (auto p = s.parent(u)) nb.push_back(*p);
        for (std::size_t v : nb) {
          if (dist[v] <= n) continue;
          dist[v] = dist[u] + 1;
          found.push_back(v);
          q.push(v);
        }
      }
      std::sort(found.begin(), found.end());
      for (std::size_t k : found) push(k);
    }
    const LimbTag tag = s.tag(j);
    if (!is_limb(tag)) continue;
    if (rules.symmetry) {
      if (auto m = detail::joint_at_depth(s, mirror_of(tag), s.chain_depth(j))) push(*m);
    }
    if (rules.contralateral) {
      if (auto m = detail::joint_at_depth(s, contralateral_of(tag), s.chain_depth(j))) {
        push(*m);
      }
    }
  }
  return RelationSet(std::move(sets));
}

// ---------------------------------------------------------------------------
// Skeleton definition files

inline Skeleton skeleton_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("joints") || !doc["joints"].is_array()) {
    throw ValidationError("skeleton file must be an object with a 'joints' array");
  }
  const auto& arr = doc["joints"];
  std::map<std::string, long> index;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].contains("name") || !arr[i]["name"].is_string()) {
      throw ValidationError("joint " + std::to_string(i) + " lacks a string 'name'");
    }
    index[arr[i]["name"].get<std::string>()] = static_cast<long>(i);
  }
  std::vector<JointSpec> joints;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& e = arr[i];
    JointSpec j;
    j.name = e["name"].get<std::string>();
    const auto p = e.value("parent", nlohmann::json());
    if (p.is_null()) {
      j.parent = -1;
    } else if (p.is_string()) {
      auto it = index.find(p.get<std::string>());
      if (it == index.end()) {
        throw ValidationError("joint '" + j.name + "' names unknown parent '" +
                              p.get<std::string>() + "'");
      }
      j.parent = it->second;
    } else if (p.is_number_integer()) {
      j.parent = p.get<long>();
    } else {
      throw ValidationError("joint '" + j.name + "' has malformed parent");
    }
    if (e.contains("limb_tag")) {
      const auto tag_name = e["limb_tag"].get<std::string>();
      j.tag = parse_limb_tag(tag_name);
      if (!j.tag) {
        throw ValidationError("joint '" + j.name + "' has unknown limb tag '" +
                              tag_name + "'");
      }
    }
    if (e.contains("offset")) {
      const auto& o = e["offset"];
      if (!o.is_array() || o.size() != 3) {
        throw ValidationError("joint '" + j.name + "' offset must have 3 entries");
      }
      for (std::size_t c = 0; c < 3; ++c) j.offset[c] = o[c].get<double>();
    }
    joints.push_back(std::move(j));
  }
  return Skeleton(std::move(joints), doc.value("name", std::string("skeleton")));
}

inline nlohmann::json to_json(const Skeleton& s) {
  nlohmann::json doc;
  doc["name"] = s.name();
  doc["joints"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.joint_count(); ++i) {
    const auto& j = s.joints()[i];
    nlohmann::json e;
    e["name"] = j.name;
    e["parent"] = j.parent >= 0 ? nlohmann::json(s.joint_name(static_cast<std::size_t>(j.parent)))
                                : nlohmann::json();
    e["limb_tag"] = std::string(to_string(*j.tag));
    e["offset"] = {j.offset[0], j.offset[1], j.offset[2]};
    doc["joints"].push_back(std::move(e));
  }
  return doc;
}

inline Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open skeleton file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("skeleton file " + path + ": " + e.what());
  }
  return skeleton_from_json(doc);
}

/// Seven joints: torso root with a one-joint arm and a two-joint leg per side.
inline Skeleton toy_skeleton() {
  std::vector<JointSpec> j{
      {"root", -1, LimbTag::torso, {0.0, 1000.0, 0.0}},
      {"left_arm_0", 0, LimbTag::left_arm, {200.0, 300.0, 0.0}},
      {"right_arm_0", 0, LimbTag::right_arm, {-200.0, 300.0, 0.0}},
      {"left_leg_0", 0, LimbTag::left_leg, {100.0, -450.0, 0.0}},
      {"left_leg_1", 3, LimbTag::left_leg, {0.0, -450.0, 0.0}},
      {"right_leg_0", 0, LimbTag::right_leg, {-100.0, -450.0, 0.0}},
      {"right_leg_1", 5, LimbTag::right_leg, {0.0, -450.0, 0.0}},
  };
  return Skeleton(std::move(j), "toy7");
}

}  // namespace phasemotion
