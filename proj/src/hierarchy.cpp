#include "hyperseg/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace hyperseg {

namespace {

using Json = nlohmann::json;

void collect(const Json& node, const std::optional<std::string>& parent,
             std::vector<std::pair<std::string, std::optional<std::string>>>& out) {
  if (!node.is_object() || !node.contains("name") || !node["name"].is_string())
    throw HierarchyError("hierarchy: every node needs a string \"name\"");
  const std::string name = node["name"].get<std::string>();
  out.emplace_back(name, parent);
  if (!node.contains("children") || node["children"].is_null()) return;
  if (!node["children"].is_array()) throw HierarchyError("hierarchy: \"children\" must be an array");
  for (const Json& child : node["children"]) collect(child, name, out);
}

Json to_json_node(const ClassHierarchy& tree, std::size_t id) {
  Json j;
  j["name"] = tree.name(id);
  Json children = Json::array();
  for (std::size_t c : tree.node(id).children) children.push_back(to_json_node(tree, c));
  j["children"] = children;
  return j;
}

// log-softmax over the logits of one sibling group, written to out[plane].
void group_log_softmax(std::span<const double> logits, const std::vector<std::size_t>& group,
                       std::span<double> out) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t h : group) top = std::max(top, logits[ClassHierarchy::plane_of(h)]);
  double total = 0.0;
  for (std::size_t h : group) total += std::exp(logits[ClassHierarchy::plane_of(h)] - top);
  const double log_total = top + std::log(total);
  for (std::size_t h : group) out[ClassHierarchy::plane_of(h)] = logits[ClassHierarchy::plane_of(h)] - log_total;
}

void check_logits(std::span<const double> logits, const ClassHierarchy& tree) {
  if (logits.size() != tree.plane_count())
    throw std::invalid_argument("hierarchy: expected one logit per non-root node");
}

}  // namespace

ClassHierarchy ClassHierarchy::from_parents(
    const std::vector<std::pair<std::string, std::optional<std::string>>>& entries) {
  if (entries.empty()) throw HierarchyError("hierarchy: empty tree");
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!by_name.emplace(entries[i].first, i).second)
      throw HierarchyError("hierarchy: duplicate node name '" + entries[i].first + "'");

  std::optional<std::size_t> root;
  std::vector<std::vector<std::size_t>> children(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& parent = entries[i].second;
    if (!parent) {
      if (root) throw HierarchyError("hierarchy: multiple roots");
      root = i;
      continue;
    }
    const auto it = by_name.find(*parent);
    if (it == by_name.end()) throw HierarchyError("hierarchy: unknown parent '" + *parent + "'");
    if (it->second == i) throw HierarchyError("hierarchy: cycle at '" + entries[i].first + "'");
    children[it->second].push_back(i);
  }
  if (!root) throw HierarchyError("hierarchy: no root (cycle)");
  if (children[*root].empty()) throw HierarchyError("hierarchy: empty tree (root has no children)");

  // Preorder walk from the root; anything unreached sits on a cycle.
  ClassHierarchy tree;
  std::vector<std::pair<std::size_t, std::optional<std::size_t>>> stack{{*root, std::nullopt}};
  std::vector<bool> seen(entries.size(), false);
  while (!stack.empty()) {
    const auto [entry, parent] = stack.back();
    stack.pop_back();
    if (seen[entry]) throw HierarchyError("hierarchy: cycle");
    seen[entry] = true;
    const std::size_t id = tree.nodes_.size();
    Node node{entries[entry].first, parent, {}, parent ? tree.nodes_[*parent].depth + 1 : 0};
    tree.nodes_.push_back(std::move(node));
    if (parent) tree.nodes_[*parent].children.push_back(id);
    for (auto it = children[entry].rbegin(); it != children[entry].rend(); ++it) stack.emplace_back(*it, id);
  }
  if (tree.nodes_.size() != entries.size()) throw HierarchyError("hierarchy: cycle (unreachable nodes)");
  tree.index();
  return tree;
}

ClassHierarchy ClassHierarchy::from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw HierarchyError(std::string("hierarchy: malformed document: ") + e.what());
  }
  if (doc.is_array()) {
    if (doc.size() != 1) throw HierarchyError("hierarchy: multiple roots");
    doc = doc[0];
  }
  std::vector<std::pair<std::string, std::optional<std::string>>> entries;
  collect(doc, std::nullopt, entries);
  return from_parents(entries);
}

ClassHierarchy ClassHierarchy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw HierarchyError("hierarchy: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

ClassHierarchy ClassHierarchy::flat(std::size_t leaves, const std::vector<std::string>& names) {
  std::vector<std::pair<std::string, std::optional<std::string>>> entries{{"root", std::nullopt}};
  for (std::size_t i = 0; i < leaves; ++i)
    entries.emplace_back(i < names.size() ? names[i] : "class" + std::to_string(i), "root");
  return from_parents(entries);
}

std::string ClassHierarchy::to_json() const { return to_json_node(*this, 0).dump(2); }

void ClassHierarchy::index() {
  leaves_.clear();
  internal_.clear();
  leaf_index_.assign(nodes_.size(), std::nullopt);
  depth_ = 0;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].children.empty()) {
      leaf_index_[id] = leaves_.size();
      leaves_.push_back(id);
      depth_ = std::max(depth_, nodes_[id].depth);
    } else {
      internal_.push_back(id);
    }
  }
}

std::optional<std::size_t> ClassHierarchy::find(const std::string& name) const {
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].name == name) return id;
  return std::nullopt;
}

std::optional<std::size_t> ClassHierarchy::leaf_of(std::size_t node) const {
  if (node >= nodes_.size()) return std::nullopt;
  return leaf_index_[node];
}

std::optional<std::size_t> ClassHierarchy::leaf_by_name(const std::string& name) const {
  const auto id = find(name);
  return id ? leaf_of(*id) : std::nullopt;
}

std::vector<std::size_t> ClassHierarchy::all_leaves() const {
  std::vector<std::size_t> out(leaves_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::vector<std::size_t> ClassHierarchy::ancestors(std::size_t node) const {
  if (node >= nodes_.size()) throw std::out_of_range("hierarchy: unknown node");
  if (node == 0) throw std::invalid_argument("hierarchy: the virtual root has no gyroplane");
  std::vector<std::size_t> out;
  for (auto p = nodes_[node].parent; p && *p != 0; p = nodes_[*p].parent) out.push_back(*p);
  return out;
}

const std::vector<std::size_t>& ClassHierarchy::siblings(std::size_t node) const {
  if (node >= nodes_.size()) throw std::out_of_range("hierarchy: unknown node");
  if (node == 0) throw std::invalid_argument("hierarchy: the virtual root has no gyroplane");
  return nodes_[*nodes_[node].parent].children;
}

std::vector<std::size_t> ClassHierarchy::path(std::size_t node) const {
  std::vector<std::size_t> out = ancestors(node);
  std::reverse(out.begin(), out.end());
  out.push_back(node);
  return out;
}

std::optional<std::size_t> ClassHierarchy::ancestor_at(std::size_t leaf, std::size_t levels) const {
  std::optional<std::size_t> id = leaf_node(leaf);
  for (std::size_t i = 0; i < levels && id; ++i) id = nodes_[*id].parent;
  return id;
}

std::vector<double> conditional_log_probabilities(std::span<const double> node_logits,
                                                  const ClassHierarchy& tree) {
  check_logits(node_logits, tree);
  std::vector<double> out(tree.plane_count());
  for (std::size_t parent : tree.internal_nodes())
    group_log_softmax(node_logits, tree.node(parent).children, out);
  return out;
}

std::vector<double> hierarchical_probabilities(std::span<const double> node_logits,
                                               const ClassHierarchy& tree) {
  const std::vector<double> cond = conditional_log_probabilities(node_logits, tree);
  std::vector<double> out(tree.leaf_count());
  for (std::size_t leaf = 0; leaf < out.size(); ++leaf) {
    double log_p = 0.0;
    for (std::size_t h : tree.path(tree.leaf_node(leaf))) log_p += cond[ClassHierarchy::plane_of(h)];
    out[leaf] = std::exp(log_p);
  }
  return out;
}

double hierarchical_nll(std::span<const double> node_logits, const ClassHierarchy& tree, std::size_t leaf) {
  check_logits(node_logits, tree);
  if (leaf >= tree.leaf_count()) throw std::out_of_range("hierarchical_nll: unknown leaf");
  std::vector<double> scratch(tree.plane_count());
  double loss = 0.0;
  for (std::size_t h : tree.path(tree.leaf_node(leaf))) {
    group_log_softmax(node_logits, tree.siblings(h), scratch);
    loss -= scratch[ClassHierarchy::plane_of(h)];
  }
  return loss;
}

double hierarchical_nll_backward(std::span<const double> node_logits, const ClassHierarchy& tree,
                                 std::size_t leaf, double scale, std::span<double> grad) {
  check_logits(node_logits, tree);
  if (leaf >= tree.leaf_count()) throw std::out_of_range("hierarchical_nll: unknown leaf");
  std::vector<double> scratch(tree.plane_count());
  double loss = 0.0;
  for (std::size_t h : tree.path(tree.leaf_node(leaf))) {
    const auto& group = tree.siblings(h);
    group_log_softmax(node_logits, group, scratch);
    loss -= scratch[ClassHierarchy::plane_of(h)];
    for (std::size_t s : group) {
      const std::size_t plane = ClassHierarchy::plane_of(s);
      grad[plane] += scale * (std::exp(scratch[plane]) - (s == h ? 1.0 : 0.0));
    }
  }
  return loss;
}

std::size_t predict_leaf(std::span<const double> node_logits, const ClassHierarchy& tree,
                         std::span<const std::size_t> allowed) {
  if (allowed.empty()) throw std::invalid_argument("predict_leaf: empty allowed set");
  const std::vector<double> cond = conditional_log_probabilities(node_logits, tree);
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_log_p = -std::numeric_limits<double>::infinity();
  for (std::size_t leaf : allowed) {
    if (leaf >= tree.leaf_count()) throw std::out_of_range("predict_leaf: unknown leaf");
    double log_p = 0.0;
    for (std::size_t h : tree.path(tree.leaf_node(leaf))) log_p += cond[ClassHierarchy::plane_of(h)];
    if (best == std::numeric_limits<std::size_t>::max() || log_p > best_log_p ||
        (log_p == best_log_p && leaf < best)) {
      best = leaf;
      best_log_p = log_p;
    }
  }
  return best;
}

}  // namespace hyperseg
