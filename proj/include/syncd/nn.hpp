#ifndef SYNCD_NN_HPP
#define SYNCD_NN_HPP

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "syncd/attention.hpp"

namespace syncd {

struct Parameter {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Parameter(std::string n, Eigen::MatrixXd v)
        : name(std::move(n)), value(std::move(v)),
          grad(Eigen::MatrixXd::Zero(value.rows(), value.cols())) {}
    void zero_grad() { grad.setZero(); }
};

// Reverse-mode tape over dense matrices. A graph is built per forward pass;
// backward() accumulates into Parameter::grad.
class Graph {
public:
    using Ref = std::size_t;

    Ref constant(Eigen::MatrixXd v);
    Ref param(Parameter* p);

    Ref matmul(Ref a, Ref b);
    Ref add(Ref a, Ref b);
    Ref scale(Ref a, double s);
    // Broadcast a [1 x d] row onto every row of a [n x d] node.
    Ref add_row(Ref a, Ref row);
    Ref slice_rows(Ref a, std::size_t first, std::size_t count);
    Ref concat_rows(const std::vector<Ref>& parts);
    // Per-row layer norm with affine params gamma/beta, both [1 x d].
    Ref layer_norm(Ref a, Ref gamma, Ref beta);
    Ref gelu(Ref a);
    // Fused masked multi-head attention. q/k/v are [n x heads*head_dim]; bias is
    // an [n x n] additive mask of {0, kBlockedSentinel}; rotary embedding from
    // `positions` is applied to q and k inside the op.
    Ref attention(Ref q, Ref k, Ref v, const Eigen::MatrixXd& bias,
                  const std::vector<TokenPosition>& positions, std::size_t heads,
                  std::size_t head_dim,
                  Eigen::MatrixXd* capture_probs_head0 = nullptr,
                  std::vector<Eigen::MatrixXd>* capture_probs = nullptr);
    // Mean squared error against a constant target; returns a [1 x 1] node.
    Ref mse(Ref a, const Eigen::MatrixXd& target);

    const Eigen::MatrixXd& value(Ref r) const { return nodes_[r].value; }
    void backward(Ref loss);

private:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        Parameter* param = nullptr;
        std::function<void(Graph&, Node&)> back;  // null for leaves
    };
    Ref push(Eigen::MatrixXd value, std::function<void(Graph&, Node&)> back);
    Eigen::MatrixXd& grad(Ref r);

    std::vector<Node> nodes_;
    friend struct NodeAccess;
};

}  // namespace syncd

#endif
