#pragma once

// Class trees and the hierarchical softmax over per-node gyroplane logits.
//
// Nodes are stored in depth-first preorder with the virtual root at index 0.
// Every other node owns one gyroplane, at plane index node - 1. Leaves are the
// classes; the class id of a leaf is its position in depth-first order.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyperseg {

class HierarchyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ClassHierarchy {
 public:
  struct Node {
    std::string name;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::size_t depth = 0;
  };

  /// Builds a tree from (name, parent name) pairs; exactly one entry must have
  /// no parent. Children keep their input order.
  static ClassHierarchy from_parents(
      const std::vector<std::pair<std::string, std::optional<std::string>>>& entries);
  /// Parses {"name": ..., "children": [...]} documents.
  static ClassHierarchy from_json(const std::string& text);
  static ClassHierarchy load(const std::filesystem::path& path);
  /// Root with `leaves` direct children named by `names` (or "class<i>").
  static ClassHierarchy flat(std::size_t leaves, const std::vector<std::string>& names = {});

  std::string to_json() const;

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t plane_count() const { return nodes_.size() - 1; }
  std::size_t leaf_count() const { return leaves_.size(); }
  std::size_t depth() const { return depth_; }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const std::string& name(std::size_t id) const { return nodes_.at(id).name; }
  bool is_leaf(std::size_t id) const { return nodes_.at(id).children.empty(); }
  std::optional<std::size_t> find(const std::string& name) const;

  /// Node id of class `leaf`, and the inverse mapping.
  std::size_t leaf_node(std::size_t leaf) const { return leaves_.at(leaf); }
  std::optional<std::size_t> leaf_of(std::size_t node) const;
  std::optional<std::size_t> leaf_by_name(const std::string& name) const;
  std::vector<std::size_t> all_leaves() const;

  static std::size_t plane_of(std::size_t node) { return node - 1; }

  /// Ancestors of `node`, nearest first, excluding the virtual root.
  std::vector<std::size_t> ancestors(std::size_t node) const;
  /// Children of the parent of `node`, including `node` itself.
  const std::vector<std::size_t>& siblings(std::size_t node) const;
  /// Nodes on the path from the top level down to `node` (ancestors reversed plus node).
  std::vector<std::size_t> path(std::size_t node) const;

  /// Ancestor `levels` steps above leaf `leaf`, if it exists (the root counts).
  std::optional<std::size_t> ancestor_at(std::size_t leaf, std::size_t levels) const;

  /// Ids of nodes with children, root included; each owns one sibling group.
  const std::vector<std::size_t>& internal_nodes() const { return internal_; }

 private:
  void index();

  std::vector<Node> nodes_;
  std::vector<std::size_t> leaves_;
  std::vector<std::size_t> internal_;
  std::vector<std::optional<std::size_t>> leaf_index_;
  std::size_t depth_ = 0;
};

/// Leaf probabilities: product over the root-to-leaf path of sibling-group
/// softmaxes. `node_logits` is indexed by plane (node - 1).
std::vector<double> hierarchical_probabilities(std::span<const double> node_logits,
                                               const ClassHierarchy& tree);

/// Conditional log-probabilities log p(h | parent(h)) for every non-root node,
/// indexed by plane.
std::vector<double> conditional_log_probabilities(std::span<const double> node_logits,
                                                  const ClassHierarchy& tree);

/// -log p(leaf), summed as per-level log-softmax terms.
double hierarchical_nll(std::span<const double> node_logits, const ClassHierarchy& tree, std::size_t leaf);

/// Adds scale * d(-log p(leaf)) / d(node_logits) into `grad`; returns the loss.
double hierarchical_nll_backward(std::span<const double> node_logits, const ClassHierarchy& tree,
                                 std::size_t leaf, double scale, std::span<double> grad);

/// Most probable leaf among `allowed`; ties go to the lowest class id.
std::size_t predict_leaf(std::span<const double> node_logits, const ClassHierarchy& tree,
                         std::span<const std::size_t> allowed);

}  // namespace hyperseg
