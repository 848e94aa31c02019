#include "syncd/nn.hpp"

#include <cmath>
#include <numbers>

namespace syncd {

namespace {
constexpr double kLnEps = 1e-6;

void rope_matrix(Eigen::MatrixXd& m, const std::vector<TokenPosition>& positions,
                 std::size_t heads, std::size_t head_dim, double sign) {
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        const TokenPosition& p = positions[static_cast<std::size_t>(t)];
        if (!p.rotate) continue;
        for (std::size_t h = 0; h < heads; ++h) {
            // Row-wise copy; Eigen default storage is column-major.
            Eigen::VectorXd head = m.row(t).segment(static_cast<Eigen::Index>(h * head_dim),
                                                    static_cast<Eigen::Index>(head_dim));
            rope_rotate_head(head.data(), head_dim, p.row, p.col, sign);
            m.row(t).segment(static_cast<Eigen::Index>(h * head_dim),
                             static_cast<Eigen::Index>(head_dim)) = head;
        }
    }
}
}  // namespace

Graph::Ref Graph::push(Eigen::MatrixXd value, std::function<void(Graph&, Node&)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Eigen::MatrixXd& Graph::grad(Ref r) {
    Node& n = nodes_[r];
    if (n.grad.size() == 0) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Graph::Ref Graph::constant(Eigen::MatrixXd v) { return push(std::move(v), nullptr); }

Graph::Ref Graph::param(Parameter* p) {
    Ref r = push(p->value, nullptr);
    nodes_[r].param = p;
    return r;
}

Graph::Ref Graph::matmul(Ref a, Ref b) {
    Eigen::MatrixXd v = nodes_[a].value * nodes_[b].value;
    return push(std::move(v), [a, b](Graph& g, Node& n) {
        g.grad(a) += n.grad * g.nodes_[b].value.transpose();
        g.grad(b) += g.nodes_[a].value.transpose() * n.grad;
    });
}

Graph::Ref Graph::add(Ref a, Ref b) {
    Eigen::MatrixXd v = nodes_[a].value + nodes_[b].value;
    return push(std::move(v), [a, b](Graph& g, Node& n) {
        g.grad(a) += n.grad;
        g.grad(b) += n.grad;
    });
}

Graph::Ref Graph::scale(Ref a, double s) {
    Eigen::MatrixXd v = s * nodes_[a].value;
    return push(std::move(v), [a, s](Graph& g, Node& n) { g.grad(a) += s * n.grad; });
}

Graph::Ref Graph::add_row(Ref a, Ref row) {
    Eigen::MatrixXd v = nodes_[a].value.rowwise() + nodes_[row].value.row(0);
    return push(std::move(v), [a, row](Graph& g, Node& n) {
        g.grad(a) += n.grad;
        g.grad(row).row(0) += n.grad.colwise().sum();
    });
}

Graph::Ref Graph::slice_rows(Ref a, std::size_t first, std::size_t count) {
    Eigen::MatrixXd v = nodes_[a].value.middleRows(static_cast<Eigen::Index>(first),
                                                   static_cast<Eigen::Index>(count));
    return push(std::move(v), [a, first, count](Graph& g, Node& n) {
        g.grad(a).middleRows(static_cast<Eigen::Index>(first),
                             static_cast<Eigen::Index>(count)) += n.grad;
    });
}

Graph::Ref Graph::concat_rows(const std::vector<Ref>& parts) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = nodes_[parts.at(0)].value.cols();
    for (Ref p : parts) rows += nodes_[p].value.rows();
    Eigen::MatrixXd v(rows, cols);
    Eigen::Index at = 0;
    for (Ref p : parts) {
        v.middleRows(at, nodes_[p].value.rows()) = nodes_[p].value;
        at += nodes_[p].value.rows();
    }
    std::vector<Ref> parts_copy = parts;
    return push(std::move(v), [parts_copy](Graph& g, Node& n) {
        Eigen::Index at = 0;
        for (Ref p : parts_copy) {
            const Eigen::Index r = g.nodes_[p].value.rows();
            g.grad(p) += n.grad.middleRows(at, r);
            at += r;
        }
    });
}

Graph::Ref Graph::layer_norm(Ref a, Ref gamma, Ref beta) {
    const Eigen::MatrixXd& x = nodes_[a].value;
    const Eigen::Index n = x.rows(), d = x.cols();
    Eigen::MatrixXd xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + kLnEps);
        xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
    }
    Eigen::MatrixXd y =
        (xhat.array().rowwise() * nodes_[gamma].value.row(0).array()).rowwise() +
        nodes_[beta].value.row(0).array();
    return push(std::move(y), [a, gamma, beta, xhat, inv_std](Graph& g, Node& nd) {
        const Eigen::MatrixXd& dy = nd.grad;
        const Eigen::Index d = dy.cols();
        g.grad(beta).row(0) += dy.colwise().sum();
        g.grad(gamma).row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
        Eigen::MatrixXd dxhat = dy.array().rowwise() * g.nodes_[gamma].value.row(0).array();
        Eigen::MatrixXd& dx = g.grad(a);
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            const double m1 = dxhat.row(r).mean();
            const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
            dx.row(r) += (inv_std(r) *
                          (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2))
                             .matrix();
        }
        (void)d;
    });
}

Graph::Ref Graph::gelu(Ref a) {
    const Eigen::MatrixXd& x = nodes_[a].value;
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const auto cdf_of = [inv_sqrt2](double v) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)); };
    Eigen::MatrixXd y = x.unaryExpr([&](double v) { return v * cdf_of(v); });
    return push(std::move(y), [a, cdf_of](Graph& g, Node& n) {
        const Eigen::ArrayXXd x = g.nodes_[a].value.array();
        const Eigen::ArrayXXd cdf = x.unaryExpr(cdf_of);
        const Eigen::ArrayXXd pdf =
            (-0.5 * x.square()).exp() / std::sqrt(2.0 * std::numbers::pi);
        g.grad(a) += (n.grad.array() * (cdf + x * pdf)).matrix();
    });
}

Graph::Ref Graph::attention(Ref q, Ref k, Ref v, const Eigen::MatrixXd& bias,
                            const std::vector<TokenPosition>& positions, std::size_t heads,
                            std::size_t head_dim, Eigen::MatrixXd* capture_probs_head0,
                            std::vector<Eigen::MatrixXd>* capture_probs) {
    const Eigen::Index n = nodes_[q].value.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Eigen::MatrixXd qr = nodes_[q].value;
    Eigen::MatrixXd kr = nodes_[k].value;
    rope_matrix(qr, positions, heads, head_dim, 1.0);
    rope_matrix(kr, positions, heads, head_dim, 1.0);

    auto probs = std::make_shared<std::vector<Eigen::MatrixXd>>();
    probs->reserve(heads);
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(heads * head_dim));
    for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(h * head_dim);
        const Eigen::Index dd = static_cast<Eigen::Index>(head_dim);
        Eigen::MatrixXd logits =
            scale * (qr.middleCols(c0, dd) * kr.middleCols(c0, dd).transpose()) + bias;
        Eigen::MatrixXd p(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const double mx = logits.row(r).maxCoeff();
            if (mx <= kBlockedSentinel / 2) {
                p.row(r).setZero();
                continue;
            }
            p.row(r) = (logits.row(r).array() - mx).exp();
            p.row(r) /= p.row(r).sum();
        }
        out.middleCols(c0, dd) = p * nodes_[v].value.middleCols(c0, dd);
        probs->push_back(std::move(p));
    }
    if (capture_probs_head0) *capture_probs_head0 = (*probs)[0];
    if (capture_probs) *capture_probs = *probs;

    auto qr_s = std::make_shared<Eigen::MatrixXd>(std::move(qr));
    auto kr_s = std::make_shared<Eigen::MatrixXd>(std::move(kr));
    auto pos = std::make_shared<std::vector<TokenPosition>>(positions);
    return push(std::move(out),
                [q, k, v, probs, qr_s, kr_s, pos, heads, head_dim, scale](Graph& g, Node& nd) {
        Eigen::MatrixXd dq_r = Eigen::MatrixXd::Zero(g.nodes_[q].value.rows(),
                                                     g.nodes_[q].value.cols());
        Eigen::MatrixXd dk_r = dq_r;
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h * head_dim);
            const Eigen::Index dd = static_cast<Eigen::Index>(head_dim);
            const Eigen::MatrixXd& p = (*probs)[h];
            const auto d_out = nd.grad.middleCols(c0, dd);
            g.grad(v).middleCols(c0, dd) += p.transpose() * d_out;
            Eigen::MatrixXd dp = d_out * g.nodes_[v].value.middleCols(c0, dd).transpose();
            // Softmax backward per row; fully-blocked rows have p == 0 -> 0.
            Eigen::MatrixXd dlogits(p.rows(), p.cols());
            for (Eigen::Index r = 0; r < p.rows(); ++r) {
                const double dot = dp.row(r).dot(p.row(r));
                dlogits.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
            }
            dq_r.middleCols(c0, dd) += scale * (dlogits * kr_s->middleCols(c0, dd));
            dk_r.middleCols(c0, dd) += scale * (dlogits.transpose() * qr_s->middleCols(c0, dd));
        }
        // Undo the rotation (orthogonal, so transpose = inverse rotation).
        rope_matrix(dq_r, *pos, heads, head_dim, -1.0);
        rope_matrix(dk_r, *pos, heads, head_dim, -1.0);
        g.grad(q) += dq_r;
        g.grad(k) += dk_r;
    });
}

Graph::Ref Graph::mse(Ref a, const Eigen::MatrixXd& target) {
    const Eigen::MatrixXd diff = nodes_[a].value - target;
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = diff.array().square().mean();
    auto t = std::make_shared<Eigen::MatrixXd>(target);
    return push(std::move(v), [a, t](Graph& g, Node& n) {
        const Eigen::MatrixXd diff = g.nodes_[a].value - *t;
        g.grad(a) += n.grad(0, 0) * 2.0 / static_cast<double>(diff.size()) * diff;
    });
}

void Graph::backward(Ref loss) {
    grad(loss).setConstant(1.0);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0) continue;
        if (n.back) n.back(*this, n);
        if (n.param) n.param->grad += n.grad;
    }
}

}  // namespace syncd
