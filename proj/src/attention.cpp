#include "syncd/attention.hpp"

#include <cmath>
#include <fstream>

namespace syncd {

std::vector<Tensor> build_msa_mask(const TokenLayout& layout, const ForegroundMask& fg,
                                   bool first_step) {
    const std::size_t N = layout.num_images;
    if (fg.per_image.size() != N || fg.h != layout.grid_h || fg.w != layout.grid_w)
        throw ShapeError("foreground mask does not match token layout");
    const std::size_t n = layout.per_image();
    const std::size_t total = layout.total();

    std::vector<Tensor> masks;
    masks.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        Tensor m({n, total}, kBlockedSentinel);
        auto mm = m.mat();
        // Own-image block: fully open.
        mm.block(0, static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n),
                 static_cast<Eigen::Index>(n)).setZero();
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            // Query image tokens may see image j's foreground image tokens
            // (all of them at the first step). Text rows stay blocked.
            for (std::size_t r = 0; r < layout.grid_h; ++r) {
                for (std::size_t c = 0; c < layout.grid_w; ++c) {
                    if (!first_step && !fg.at(j, r, c)) continue;
                    const std::size_t key = layout.image_index(j, r, c);
                    for (std::size_t qr = layout.text_len; qr < n; ++qr) {
                        mm(static_cast<Eigen::Index>(qr), static_cast<Eigen::Index>(key)) = 0.0;
                    }
                }
            }
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

PositionGrid rope_grid(const TokenLayout& layout) {
    PositionGrid grid;
    grid.positions.resize(layout.total());
    for (std::size_t i = 0; i < layout.num_images; ++i) {
        for (std::size_t t = 0; t < layout.text_len; ++t) {
            grid.positions[layout.text_index(i, t)] = TokenPosition{0.0, 0.0, false};
        }
        for (std::size_t r = 0; r < layout.grid_h; ++r) {
            for (std::size_t c = 0; c < layout.grid_w; ++c) {
                grid.positions[layout.image_index(i, r, c)] = TokenPosition{
                    static_cast<double>(i * layout.grid_h + r), static_cast<double>(c), true};
            }
        }
    }
    return grid;
}

namespace {
void rotate_pairs(double* head, std::size_t pair_begin, std::size_t pairs, double pos,
                  std::size_t band_pairs) {
    for (std::size_t k = 0; k < pairs; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(band_pairs));
        const double a = pos * freq;
        const double ca = std::cos(a), sa = std::sin(a);
        double& x0 = head[2 * (pair_begin + k)];
        double& x1 = head[2 * (pair_begin + k) + 1];
        const double r0 = x0 * ca - x1 * sa;
        const double r1 = x0 * sa + x1 * ca;
        x0 = r0;
        x1 = r1;
    }
}
}  // namespace

void rope_rotate_head(double* head, std::size_t head_dim, double row, double col, double sign) {
    const std::size_t band = head_dim / 4;
    if (band == 0) return;
    rotate_pairs(head, 0, band, sign * row, band);
    rotate_pairs(head, band, band, sign * col, band);
}

void apply_rope(Tensor& x, const PositionGrid& positions, std::size_t heads,
                std::size_t head_dim) {
    if (x.rank() != 2 || x.dim(1) != heads * head_dim)
        throw ShapeError("apply_rope: bad tensor shape " + x.shape_str());
    if (x.dim(0) > positions.positions.size())
        throw ShapeError("apply_rope: position grid too small");
    // Row band and column band each get head_dim/4 rotation pairs; a ragged
    // tail (head_dim % 4) is left unrotated.
    if (head_dim / 4 == 0) return;
    for (std::size_t t = 0; t < x.dim(0); ++t) {
        const TokenPosition& p = positions.positions[t];
        if (!p.rotate) continue;
        for (std::size_t h = 0; h < heads; ++h) {
            double* head = x.data() + t * heads * head_dim + h * head_dim;
            rope_rotate_head(head, head_dim, p.row, p.col, 1.0);
        }
    }
}

namespace {
void check_batch(const AttentionBatch& batch, const std::vector<Tensor>& masks) {
    const std::size_t N = batch.q.size();
    if (N == 0 || batch.k.size() != N || batch.v.size() != N || masks.size() != N)
        throw ShapeError("attention batch/mask image counts disagree");
    if (batch.head_dim == 0) throw ShapeError("attention head_dim must be positive");
    const std::size_t n = batch.q[0].dim(0);
    const std::size_t width = batch.heads * batch.head_dim;
    for (std::size_t i = 0; i < N; ++i) {
        if (batch.q[i].rank() != 2 || batch.q[i].dim(0) != n || batch.q[i].dim(1) != width ||
            !batch.k[i].same_shape(batch.q[i]) || !batch.v[i].same_shape(batch.q[i]))
            throw ShapeError("attention batch shapes disagree at image " + std::to_string(i));
        if (masks[i].rank() != 2 || masks[i].dim(0) != n || masks[i].dim(1) != N * n)
            throw ShapeError("bias matrix shape mismatch at image " + std::to_string(i));
    }
}

// Positions for the joint sequence: image i's token t lives at i*n + t, and we
// index the grid by that joint offset. Per-image tensors reuse grid rows
// [i*n, (i+1)*n).
Tensor roped_slice(const Tensor& x, const PositionGrid* positions, std::size_t image,
                   std::size_t n, std::size_t heads, std::size_t head_dim) {
    Tensor out = x;
    if (positions) {
        PositionGrid local;
        local.positions.assign(positions->positions.begin() + static_cast<std::ptrdiff_t>(image * n),
                               positions->positions.begin() + static_cast<std::ptrdiff_t>((image + 1) * n));
        apply_rope(out, local, heads, head_dim);
    }
    return out;
}
}  // namespace

std::vector<Tensor> msa_forward(const AttentionBatch& batch, const std::vector<Tensor>& masks,
                                const PositionGrid* positions) {
    check_batch(batch, masks);
    const std::size_t N = batch.q.size();
    const std::size_t n = batch.q[0].dim(0);
    const std::size_t H = batch.heads, D = batch.head_dim;
    if (positions && positions->positions.size() < N * n)
        throw ShapeError("position grid smaller than joint sequence");
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));

    std::vector<Tensor> qr(N), kr(N);
    for (std::size_t i = 0; i < N; ++i) {
        qr[i] = roped_slice(batch.q[i], positions, i, n, H, D);
        kr[i] = roped_slice(batch.k[i], positions, i, n, H, D);
    }

    std::vector<Tensor> out;
    out.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        Tensor o({n, H * D});
        for (std::size_t h = 0; h < H; ++h) {
            // Joint logits over all N*n keys for this head.
            Tensor logits({n, N * n});
            auto lm = logits.mat();
            auto qm = qr[i].mat().middleCols(static_cast<Eigen::Index>(h * D),
                                             static_cast<Eigen::Index>(D));
            for (std::size_t j = 0; j < N; ++j) {
                auto km = kr[j].mat().middleCols(static_cast<Eigen::Index>(h * D),
                                                 static_cast<Eigen::Index>(D));
                lm.middleCols(static_cast<Eigen::Index>(j * n), static_cast<Eigen::Index>(n)) =
                    scale * (qm * km.transpose());
            }
            lm += masks[i].mat();
            Tensor probs = softmax_lastdim(logits);
            auto pm = probs.mat();
            auto om = o.mat().middleCols(static_cast<Eigen::Index>(h * D),
                                         static_cast<Eigen::Index>(D));
            om.setZero();
            for (std::size_t j = 0; j < N; ++j) {
                auto vm = batch.v[j].mat().middleCols(static_cast<Eigen::Index>(h * D),
                                                      static_cast<Eigen::Index>(D));
                om += pm.middleCols(static_cast<Eigen::Index>(j * n),
                                    static_cast<Eigen::Index>(n)) * vm;
            }
        }
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<Tensor> attention_oracle(const AttentionBatch& batch, const std::vector<Tensor>& masks,
                                     const PositionGrid* positions) {
    check_batch(batch, masks);
    const std::size_t N = batch.q.size();
    const std::size_t n = batch.q[0].dim(0);
    const std::size_t H = batch.heads, D = batch.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));

    std::vector<Tensor> qr(N), kr(N);
    for (std::size_t i = 0; i < N; ++i) {
        qr[i] = roped_slice(batch.q[i], positions, i, n, H, D);
        kr[i] = roped_slice(batch.k[i], positions, i, n, H, D);
    }

    std::vector<Tensor> out;
    for (std::size_t i = 0; i < N; ++i) {
        Tensor o({n, H * D});
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t q = 0; q < n; ++q) {
                std::vector<double> logits(N * n);
                for (std::size_t j = 0; j < N; ++j) {
                    for (std::size_t t = 0; t < n; ++t) {
                        double dot = 0.0;
                        for (std::size_t d = 0; d < D; ++d) {
                            dot += qr[i][q * H * D + h * D + d] * kr[j][t * H * D + h * D + d];
                        }
                        logits[j * n + t] = dot * scale + masks[i][q * (N * n) + j * n + t];
                    }
                }
                double mx = logits[0];
                for (double l : logits) mx = std::max(mx, l);
                std::vector<double> w(N * n, 0.0);
                double sum = 0.0;
                if (mx > kBlockedSentinel / 2) {
                    for (std::size_t t = 0; t < N * n; ++t) {
                        w[t] = std::exp(logits[t] - mx);
                        sum += w[t];
                    }
                }
                for (std::size_t d = 0; d < D; ++d) {
                    double acc = 0.0;
                    if (sum > 0.0) {
                        for (std::size_t j = 0; j < N; ++j) {
                            for (std::size_t t = 0; t < n; ++t) {
                                acc += (w[j * n + t] / sum) * batch.v[j][t * H * D + h * D + d];
                            }
                        }
                    }
                    o[q * H * D + h * D + d] = acc;
                }
            }
        }
        out.push_back(std::move(o));
    }
    return out;
}

void write_mask_pgm(const std::filesystem::path& path, const Tensor& mask) {
    if (mask.rank() != 2) throw ShapeError("write_mask_pgm expects rank 2, got " + mask.shape_str());
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << mask.dim(1) << " " << mask.dim(0) << "\n255\n";
    for (std::size_t i = 0; i < mask.size(); ++i) {
        f.put(mask[i] <= kBlockedSentinel ? '\0' : static_cast<char>(255));
    }
}

}  // namespace syncd
