#ifndef SYNCD_ATTENTION_HPP
#define SYNCD_ATTENTION_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "syncd/tensor.hpp"

namespace syncd {

// Token ordering for a set of N jointly generated images: per image i the
// tokens are [text_i | image_i], images concatenated i = 0..N-1. Image tokens
// are row-major over an H x W grid.
struct TokenLayout {
    std::size_t num_images = 1;
    std::size_t text_len = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;

    std::size_t per_image() const { return text_len + grid_h * grid_w; }
    std::size_t total() const { return num_images * per_image(); }
    // Flat index of image i's text token t / image token (r, c).
    std::size_t text_index(std::size_t i, std::size_t t) const { return i * per_image() + t; }
    std::size_t image_index(std::size_t i, std::size_t r, std::size_t c) const {
        return i * per_image() + text_len + r * grid_w + c;
    }
};

// Per-image boolean object masks, true = foreground pixel.
struct ForegroundMask {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<std::vector<std::uint8_t>> per_image;  // each h*w, row-major

    bool at(std::size_t image, std::size_t r, std::size_t c) const {
        return per_image[image][r * w + c] != 0;
    }
};

// Rotary position per token. Text tokens sit in a frequency-zero band: they
// carry position (0,0) and are not rotated.
struct TokenPosition {
    double row = 0.0;
    double col = 0.0;
    bool rotate = false;
};

struct PositionGrid {
    std::vector<TokenPosition> positions;  // one per token, layout order
};

// Per-image q/k/v of shape [n x heads*head_dim].
struct AttentionBatch {
    std::size_t heads = 1;
    std::size_t head_dim = 0;
    std::vector<Tensor> q, k, v;
};

// Additive bias matrices M_i, one [n x N*n] tensor per query image; entries
// are 0 or kBlockedSentinel. Own-image block is always zero. Cross-image
// image->foreground-image entries are open, everything else toward other
// images is blocked. first_step relaxes only image<->image pairs to full
// attention; text isolation is never relaxed.
std::vector<Tensor> build_msa_mask(const TokenLayout& layout, const ForegroundMask& fg,
                                   bool first_step);

// Stacked rotary grid: image i's image token (r, c) gets position (i*H + r, c).
PositionGrid rope_grid(const TokenLayout& layout);

// In-place rotary rotation of one head vector; sign = -1 inverts the rotation.
void rope_rotate_head(double* head, std::size_t head_dim, double row, double col, double sign);

// Apply axial 2-D rotary embedding in place to a [n x heads*head_dim] tensor.
// Within each head, the first half of the rotation pairs turn by row index and
// the second half by column index, base frequency 10000.
void apply_rope(Tensor& x, const PositionGrid& positions, std::size_t heads,
                std::size_t head_dim);

// Masked shared attention over the joint key/value sequence. positions may be
// null to skip rotary embedding.
std::vector<Tensor> msa_forward(const AttentionBatch& batch, const std::vector<Tensor>& masks,
                                const PositionGrid* positions);

// Explicit-loop reference with the same contract; test oracle.
std::vector<Tensor> attention_oracle(const AttentionBatch& batch, const std::vector<Tensor>& masks,
                                     const PositionGrid* positions = nullptr);

// Debug visualization of a bias matrix (white = open, black = blocked).
void write_mask_pgm(const std::filesystem::path& path, const Tensor& mask);

}  // namespace syncd

#endif
