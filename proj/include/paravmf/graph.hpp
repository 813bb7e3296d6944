#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "paravmf/common.hpp"
#include "paravmf/compute.hpp"
#include "paravmf/vmf.hpp"

namespace paravmf {

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// A contiguous block of rows belonging to one sequence of a packed batch.
struct Segment {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

/// Reverse-mode tape over dense row-major matrices.
///
/// Every op appends a node holding its value and, when recording, a closure that
/// pushes the node's gradient to its inputs. Parameter leaves alias the store:
/// values are read in place and gradients accumulate straight into
/// ParameterStore::Entry::grad, so the store must outlive the graph.
class Graph {
 public:
  explicit Graph(bool record = true, std::uint64_t dropout_seed = 0);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var param(ParameterStore::Entry& entry);
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  /// Gradient of a non-parameter node; empty if no gradient reached it.
  const Matrix& grad(Var v) const;

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a + broadcast of the 1 x n row vector over every row of a.
  Var add_row(Var a, Var row);
  Var scale(Var a, double s);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);
  /// Multi-head scaled dot-product attention over a packed batch: query segment
  /// s attends only to key segment s; `causal` additionally hides later keys.
  Var attention(Var q, Var k, Var v, int heads, const std::vector<Segment>& q_segments,
                const std::vector<Segment>& k_segments, bool causal);
  Var gather_rows(Var table, const std::vector<TokenId>& rows);
  Var dropout(Var x, double p);

  /// Sum over rows of nll_vmf(pred_i, targets_i). Per-row losses are written to
  /// `per_row` when given.
  Var vmf_loss(Var pred, Matrix targets, const VmfConfig& cfg, std::vector<double>* per_row = nullptr);
  /// Sum over rows of -log softmax(logits_i)[target_i].
  Var cross_entropy(Var logits, const std::vector<TokenId>& targets, std::vector<double>* per_row = nullptr);

  void backward(Var loss);

  /// Describes the first node holding a non-finite value, if any.
  std::optional<std::string> first_non_finite() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external_value = nullptr;
    Matrix grad;
    Matrix* external_grad = nullptr;
    bool needs_grad = false;
    const char* op = "";
    std::string label;
    std::function<void()> backward;
  };

  Var push(Matrix value, const char* op, bool needs_grad);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  const Matrix& out_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  template <typename Expr>
  void accumulate(Var v, const Expr& g);

  bool record_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
};

}  // namespace paravmf
